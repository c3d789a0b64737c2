use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lstm::LstmLayer;
use super::model::{DeepLstmModel, Standardizer};
use crate::{Error, Result};

const FORMAT: &str = "ncm-lstm-checkpoint";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    rows: usize,
    cols: usize,
    /// Row-major.
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    state_dim: usize,
    layers: usize,
    hidden: usize,
    time_input: bool,
    seed: u64,
    input_norm: Standardizer,
    output_norm: Standardizer,
    tensors: Vec<Tensor>,
}

pub fn save_checkpoint<W: Write>(model: &DeepLstmModel, mut w: W) -> Result<()> {
    let shapes = model.tensor_shapes();
    let mut tensors = Vec::with_capacity(shapes.len());
    let mut k = 0;
    model.visit(|name, data| {
        let (_, rows, cols) = &shapes[k];
        let m = DMatrix::from_column_slice(*rows, *cols, data);
        let mut row_major = Vec::with_capacity(data.len());
        for r in 0..*rows {
            for c in 0..*cols {
                row_major.push(m[(r, c)]);
            }
        }
        tensors.push(Tensor {
            name,
            rows: *rows,
            cols: *cols,
            data: row_major,
        });
        k += 1;
    });
    let ck = Checkpoint {
        format: FORMAT.into(),
        version: VERSION,
        state_dim: model.state_dim,
        layers: model.num_layers(),
        hidden: model.hidden(),
        time_input: model.time_input,
        seed: model.seed,
        input_norm: model.input_norm.clone(),
        output_norm: model.output_norm.clone(),
        tensors,
    };
    serde_json::to_writer_pretty(&mut w, &ck)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn load_checkpoint<R: Read>(r: R) -> Result<DeepLstmModel> {
    let ck: Checkpoint = serde_json::from_reader(r)?;
    if ck.format != FORMAT || ck.version != VERSION {
        return Err(Error::Parse(format!("unsupported checkpoint {} v{}", ck.format, ck.version)));
    }
    let input_dim = ck.state_dim + ck.time_input as usize;
    let mut model = DeepLstmModel {
        state_dim: ck.state_dim,
        time_input: ck.time_input,
        layers: (0..ck.layers)
            .map(|l| LstmLayer::zeros(if l == 0 { input_dim } else { ck.hidden }, ck.hidden))
            .collect(),
        w_hy: DMatrix::zeros(crate::metric::packed_len(ck.state_dim), ck.hidden),
        b_y: DVector::zeros(crate::metric::packed_len(ck.state_dim)),
        input_norm: ck.input_norm,
        output_norm: ck.output_norm,
        seed: ck.seed,
    };
    if model.input_norm.dim() != input_dim || model.output_norm.dim() != model.output_dim() {
        return Err(Error::Shape("normalizer dimensions do not match the model".into()));
    }
    let shapes = model.tensor_shapes();
    if shapes.len() != ck.tensors.len() {
        return Err(Error::Shape(format!("expected {} tensors, found {}", shapes.len(), ck.tensors.len())));
    }
    for ((name, rows, cols), t) in shapes.iter().zip(&ck.tensors) {
        if *name != t.name || *rows != t.rows || *cols != t.cols || t.data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "tensor {} ({}x{}) does not match expected {name} ({rows}x{cols})",
                t.name, t.rows, t.cols
            )));
        }
    }
    let mut k = 0;
    let tensors = &ck.tensors;
    model.visit_mut(|_, dst| {
        let t = &tensors[k];
        for r in 0..t.rows {
            for c in 0..t.cols {
                dst[c * t.rows + r] = t.data[r * t.cols + c];
            }
        }
        k += 1;
    });
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn round_trip_is_bit_identical() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut m = DeepLstmModel::new_random(3, 5, 2, false, 9, &mut rng).unwrap();
        m.input_norm = Standardizer {
            mean: vec![0.1, -0.2, 1.0 / 3.0],
            scale: vec![2.0, 0.7, std::f64::consts::PI],
        };
        let mut buf = Vec::new();
        save_checkpoint(&m, &mut buf).unwrap();
        let back = load_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        let mut again = Vec::new();
        save_checkpoint(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(load_checkpoint(&b"{\"format\":\"x\"}"[..]).is_err());
    }
}
