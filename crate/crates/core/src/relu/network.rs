use std::io::Write;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// One affine map `x ↦ W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Layer {
    pub fn new(w: Array2<f64>, b: Array1<f64>) -> Result<Self> {
        if w.nrows() != b.len() {
            return Err(Error::DimensionMismatch { expected: w.nrows(), got: b.len() });
        }
        Ok(Layer { w, b })
    }

    fn nonzeros(&self) -> usize {
        self.w.iter().chain(self.b.iter()).filter(|v| **v != 0.0).count()
    }
}

/// Width = widest hidden layer, depth = number of hidden layers, size =
/// number of nonzero weights and biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub width: usize,
    pub depth: usize,
    pub size: usize,
}

/// Affine layers with ReLU between consecutive ones (none after the last).
#[derive(Debug, Clone, PartialEq)]
pub struct ReluNetwork {
    layers: Vec<Layer>,
    stats: NetworkStats,
}

fn count(layers: &[Layer]) -> NetworkStats {
    let hidden = &layers[..layers.len() - 1];
    NetworkStats {
        width: hidden.iter().map(|l| l.w.nrows()).max().unwrap_or(0),
        depth: hidden.len(),
        size: layers.iter().map(Layer::nonzeros).sum(),
    }
}

impl ReluNetwork {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("a network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[1].w.ncols() != pair[0].w.nrows() {
                return Err(Error::DimensionMismatch { expected: pair[0].w.nrows(), got: pair[1].w.ncols() });
            }
        }
        let stats = count(&layers);
        Ok(ReluNetwork { layers, stats })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].w.nrows()
    }

    /// Accounting recorded at construction.
    pub fn stats(&self) -> NetworkStats {
        self.stats
    }

    /// Accounting recomputed from the current layers.
    pub fn recount(&self) -> NetworkStats {
        count(&self.layers)
    }

    pub fn eval(&self, input: ArrayView1<f64>) -> Result<Array1<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: input.len() });
        }
        let last = self.layers.len() - 1;
        let mut h = input.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            h = l.w.dot(&h) + &l.b;
            if i < last {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok(h)
    }

    /// Rows of `inputs` are evaluated independently.
    pub fn eval_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: inputs.ncols() });
        }
        let last = self.layers.len() - 1;
        let mut h = inputs.t().to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            h = l.w.dot(&h) + &l.b.view().insert_axis(ndarray::Axis(1));
            if i < last {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok(h.reversed_axes())
    }

    /// Runs two networks of equal depth side by side on the concatenated input.
    pub fn parallel(&self, other: &ReluNetwork) -> Result<ReluNetwork> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "parallel networks need equal depth, got {} and {}",
                self.stats.depth, other.stats.depth
            )));
        }
        let layers = self
            .layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| {
                let (ra, ca) = a.w.dim();
                let (rb, cb) = b.w.dim();
                let mut w = Array2::zeros((ra + rb, ca + cb));
                w.slice_mut(s![..ra, ..ca]).assign(&a.w);
                w.slice_mut(s![ra.., ca..]).assign(&b.w);
                let mut bias = Array1::zeros(ra + rb);
                bias.slice_mut(s![..ra]).assign(&a.b);
                bias.slice_mut(s![ra..]).assign(&b.b);
                Layer { w, b: bias }
            })
            .collect();
        ReluNetwork::new(layers)
    }

    /// `outer ∘ self`; the last affine map of `self` is folded into the
    /// first of `outer`, so depths add.
    pub fn then(&self, outer: &ReluNetwork) -> Result<ReluNetwork> {
        if outer.input_dim() != self.output_dim() {
            return Err(Error::DimensionMismatch { expected: self.output_dim(), got: outer.input_dim() });
        }
        let inner_last = &self.layers[self.layers.len() - 1];
        let outer_first = &outer.layers[0];
        let merged = Layer {
            w: outer_first.w.dot(&inner_last.w),
            b: outer_first.w.dot(&inner_last.b) + &outer_first.b,
        };
        let mut layers: Vec<Layer> = self.layers[..self.layers.len() - 1].to_vec();
        layers.push(merged);
        layers.extend(outer.layers[1..].iter().cloned());
        ReluNetwork::new(layers)
    }
}

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    layers: Vec<LayerRepr>,
}

impl Serialize for ReluNetwork {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkRepr {
            layers: self
                .layers
                .iter()
                .map(|l| LayerRepr { w: l.w.rows().into_iter().map(|r| r.to_vec()).collect(), b: l.b.to_vec() })
                .collect(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for ReluNetwork {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = NetworkRepr::deserialize(de)?;
        let layers = repr
            .layers
            .into_iter()
            .map(|l| {
                let cols = l.w.first().map_or(0, Vec::len);
                if l.w.iter().any(|r| r.len() != cols) {
                    return Err(D::Error::custom("ragged weight matrix"));
                }
                let w = Array2::from_shape_vec((l.w.len(), cols), l.w.concat()).map_err(D::Error::custom)?;
                Layer::new(w, Array1::from(l.b)).map_err(D::Error::custom)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        ReluNetwork::new(layers).map_err(D::Error::custom)
    }
}

/// Writes `name,width,depth,size` rows.
pub fn write_stats_csv<W: Write>(out: W, nets: &[(&str, &ReluNetwork)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["name", "width", "depth", "size"])?;
    for (name, net) in nets {
        let s = net.stats();
        w.write_record([name.to_string(), s.width.to_string(), s.depth.to_string(), s.size.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::array;
    use rand::Rng;

    /// Straight-line interpreter over the JSON form, sharing no code with `eval`.
    fn interpret(json: &serde_json::Value, input: &[f64]) -> Vec<f64> {
        let layers = json["layers"].as_array().unwrap();
        let mut h: Vec<f64> = input.to_vec();
        for (k, layer) in layers.iter().enumerate() {
            let w = layer["w"].as_array().unwrap();
            let b = layer["b"].as_array().unwrap();
            let mut next = Vec::with_capacity(w.len());
            for (row, bias) in w.iter().zip(b) {
                let mut acc = bias.as_f64().unwrap();
                for (wij, hj) in row.as_array().unwrap().iter().zip(&h) {
                    acc += wij.as_f64().unwrap() * hj;
                }
                if k + 1 < layers.len() && acc < 0.0 {
                    acc = 0.0;
                }
                next.push(acc);
            }
            h = next;
        }
        h
    }

    fn random_net(dims: &[usize], seed: u64) -> ReluNetwork {
        let mut rng = seeded(seed);
        let layers = dims
            .windows(2)
            .map(|p| {
                let w = Array2::from_shape_fn((p[1], p[0]), |_| rng.random_range(-1.0..1.0));
                let b = Array1::from_shape_fn(p[1], |_| rng.random_range(-0.5..0.5));
                Layer::new(w, b).unwrap()
            })
            .collect();
        ReluNetwork::new(layers).unwrap()
    }

    #[test]
    fn matches_independent_interpreter() {
        let mut rng = seeded(99);
        for seed in 0..10 {
            let net = random_net(&[3, 7, 5, 2], seed);
            let json = serde_json::to_value(&net).unwrap();
            for _ in 0..50 {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                let ours = net.eval(Array1::from(x.clone()).view()).unwrap();
                let theirs = interpret(&json, &x);
                for (a, b) in ours.iter().zip(&theirs) {
                    assert!((a - b).abs() < 1e-13, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn zero_weights_return_final_bias() {
        let layers = vec![
            Layer::new(Array2::zeros((4, 2)), array![1.0, -1.0, 0.5, 0.0]).unwrap(),
            Layer::new(Array2::zeros((2, 4)), array![0.3, -7.0]).unwrap(),
        ];
        let net = ReluNetwork::new(layers).unwrap();
        assert_eq!(net.eval(array![5.0, -3.0].view()).unwrap(), array![0.3, -7.0]);
        assert_eq!(net.stats(), NetworkStats { width: 4, depth: 1, size: 5 });
    }

    #[test]
    fn batch_matches_single() {
        let net = random_net(&[2, 6, 6, 3], 4);
        let x = array![[0.1, 0.2], [-1.0, 3.0], [2.0, -0.5]];
        let batch = net.eval_batch(x.view()).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            let single = net.eval(row).unwrap();
            for j in 0..3 {
                assert!((batch[(i, j)] - single[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn json_round_trip_keeps_stats() {
        let net = random_net(&[2, 5, 1], 8);
        let text = serde_json::to_string(&net).unwrap();
        assert!(text.starts_with("{\"layers\":[{\"w\":"));
        let back: ReluNetwork = serde_json::from_str(&text).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.stats(), back.recount());
    }

    #[test]
    fn composition_and_parallel() {
        let a = random_net(&[2, 4, 3], 1);
        let b = random_net(&[3, 5, 2], 2);
        let ab = a.then(&b).unwrap();
        assert_eq!(ab.stats().depth, 2);
        let x = array![0.4, -0.9];
        let direct = b.eval(a.eval(x.view()).unwrap().view()).unwrap();
        let composed = ab.eval(x.view()).unwrap();
        assert!((&direct - &composed).iter().all(|v| v.abs() < 1e-13));

        let c = random_net(&[1, 3, 1], 3);
        let ac = a.parallel(&c).unwrap();
        let out = ac.eval(array![0.4, -0.9, 0.7].view()).unwrap();
        let left = a.eval(x.view()).unwrap();
        let right = c.eval(array![0.7].view()).unwrap();
        assert_eq!(out.len(), 4);
        assert!((out[0] - left[0]).abs() < 1e-14 && (out[3] - right[0]).abs() < 1e-14);
        assert_eq!(ac.stats().size, a.stats().size + c.stats().size);
        assert!(a.parallel(&ab).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(ReluNetwork::new(vec![]).is_err());
        assert!(Layer::new(Array2::zeros((2, 2)), Array1::zeros(3)).is_err());
        let l1 = Layer::new(Array2::zeros((3, 2)), Array1::zeros(3)).unwrap();
        let l2 = Layer::new(Array2::zeros((1, 4)), Array1::zeros(1)).unwrap();
        assert!(ReluNetwork::new(vec![l1, l2]).is_err());
        assert!(serde_json::from_str::<ReluNetwork>(r#"{"layers":[{"w":[[1,2],[3]],"b":[0,0]}]}"#).is_err());
        let net = random_net(&[2, 3, 1], 0);
        assert!(net.eval(array![1.0].view()).is_err());
    }

    #[test]
    fn stats_csv() {
        let net = random_net(&[2, 3, 1], 0);
        let mut buf = Vec::new();
        write_stats_csv(&mut buf, &[("net", &net)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let s = net.stats();
        assert_eq!(text, format!("name,width,depth,size\nnet,{},{},{}\n", s.width, s.depth, s.size));
    }
}
