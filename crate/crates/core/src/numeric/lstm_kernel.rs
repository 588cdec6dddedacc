//! Forward and backward-through-time kernels for one LSTM layer, recorded on
//! the tape as a single primitive.

use crate::error::{Error, Result};

use super::tape::sigmoid;
use super::tensor::{matmul_at_into, matmul_bt_into, matmul_into, Tensor};

pub(crate) struct LstmCache {
    /// Activated gates per row, `[i | f | g | o]`, each of width K.
    gates: Vec<f64>,
    cells: Vec<f64>,
    tanh_cells: Vec<f64>,
}

pub(crate) struct LstmGrads {
    pub input: Tensor,
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub bias: Tensor,
}

struct Dims {
    batch: usize,
    steps: usize,
    input: usize,
    hidden: usize,
}

fn check(x: &Tensor, w_ih: &Tensor, w_hh: &Tensor, bias: &Tensor, batch: usize) -> Result<Dims> {
    let (rows, input) = x.require_matrix("lstm")?;
    let (k, four_k) = w_hh.require_matrix("lstm")?;
    if four_k != 4 * k {
        return Err(Error::shape(
            "lstm recurrent weight",
            w_hh.shape(),
            &[k, 4 * k],
        ));
    }
    if w_ih.shape() != [input, four_k] {
        return Err(Error::shape(
            "lstm input weight",
            w_ih.shape(),
            &[input, four_k],
        ));
    }
    if bias.shape() != [1, four_k] {
        return Err(Error::shape("lstm bias", bias.shape(), &[1, four_k]));
    }
    if batch == 0 || rows % batch != 0 {
        return Err(Error::shape("lstm batch", x.shape(), &[batch]));
    }
    Ok(Dims {
        batch,
        steps: rows / batch,
        input,
        hidden: k,
    })
}

pub(crate) fn forward(
    x: &Tensor,
    w_ih: &Tensor,
    w_hh: &Tensor,
    bias: &Tensor,
    batch: usize,
) -> Result<(Tensor, LstmCache)> {
    let d = check(x, w_ih, w_hh, bias, batch)?;
    let k = d.hidden;
    let rows = d.batch * d.steps;

    // Input projections for every row at once; recurrent terms are added per step.
    let mut gates = vec![0.0; rows * 4 * k];
    matmul_into(x.data(), w_ih.data(), &mut gates, rows, d.input, 4 * k);
    for row in gates.chunks_exact_mut(4 * k) {
        for (z, b) in row.iter_mut().zip(bias.data()) {
            *z += b;
        }
    }

    let mut hidden = vec![0.0; rows * k];
    let mut cells = vec![0.0; rows * k];
    let mut tanh_cells = vec![0.0; rows * k];

    for b in 0..d.batch {
        for t in 0..d.steps {
            let r = b * d.steps + t;
            if t > 0 {
                let (prev, _) = hidden.split_at(r * k);
                let h_prev = &prev[(r - 1) * k..];
                matmul_into(
                    h_prev,
                    w_hh.data(),
                    &mut gates[r * 4 * k..(r + 1) * 4 * k],
                    1,
                    k,
                    4 * k,
                );
            }
            let z = &mut gates[r * 4 * k..(r + 1) * 4 * k];
            for j in 0..k {
                z[j] = sigmoid(z[j]);
                z[k + j] = sigmoid(z[k + j]);
                z[2 * k + j] = z[2 * k + j].tanh();
                z[3 * k + j] = sigmoid(z[3 * k + j]);
            }
            for j in 0..k {
                let c_prev = if t > 0 { cells[(r - 1) * k + j] } else { 0.0 };
                let c = z[k + j] * c_prev + z[j] * z[2 * k + j];
                let tc = c.tanh();
                cells[r * k + j] = c;
                tanh_cells[r * k + j] = tc;
                hidden[r * k + j] = z[3 * k + j] * tc;
            }
        }
    }

    let out = Tensor::new(vec![rows, k], hidden)?;
    Ok((
        out,
        LstmCache {
            gates,
            cells,
            tanh_cells,
        },
    ))
}

pub(crate) fn backward(
    x: &Tensor,
    w_ih: &Tensor,
    w_hh: &Tensor,
    hidden: &Tensor,
    cache: &LstmCache,
    g_out: &Tensor,
    batch: usize,
) -> Result<LstmGrads> {
    let k = w_hh.rows();
    let rows = x.rows();
    let steps = rows / batch;
    let input = x.cols();

    let mut dz = vec![0.0; rows * 4 * k];
    let mut dw_hh = vec![0.0; k * 4 * k];
    let mut dh_next = vec![0.0; k];
    let mut dc_next = vec![0.0; k];

    for b in 0..batch {
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        dc_next.iter_mut().for_each(|v| *v = 0.0);
        for t in (0..steps).rev() {
            let r = b * steps + t;
            let gate = &cache.gates[r * 4 * k..(r + 1) * 4 * k];
            let dzr = &mut dz[r * 4 * k..(r + 1) * 4 * k];
            for j in 0..k {
                let (i, f, g, o) = (gate[j], gate[k + j], gate[2 * k + j], gate[3 * k + j]);
                let dh = g_out.data()[r * k + j] + dh_next[j];
                let tc = cache.tanh_cells[r * k + j];
                let c_prev = if t > 0 {
                    cache.cells[(r - 1) * k + j]
                } else {
                    0.0
                };
                let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                dzr[j] = dc * g * i * (1.0 - i);
                dzr[k + j] = dc * c_prev * f * (1.0 - f);
                dzr[2 * k + j] = dc * i * (1.0 - g * g);
                dzr[3 * k + j] = dh * tc * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            if t > 0 {
                let h_prev = &hidden.data()[(r - 1) * k..r * k];
                matmul_at_into(h_prev, dzr, &mut dw_hh, 1, k, 4 * k);
                matmul_bt_into(dzr, w_hh.data(), &mut dh_next, 1, 4 * k, k);
            }
        }
    }

    let mut dx = vec![0.0; rows * input];
    matmul_bt_into(&dz, w_ih.data(), &mut dx, rows, 4 * k, input);
    let mut dw_ih = vec![0.0; input * 4 * k];
    matmul_at_into(x.data(), &dz, &mut dw_ih, rows, input, 4 * k);
    let mut db = vec![0.0; 4 * k];
    for row in dz.chunks_exact(4 * k) {
        for (acc, v) in db.iter_mut().zip(row) {
            *acc += v;
        }
    }

    Ok(LstmGrads {
        input: Tensor::new(vec![rows, input], dx)?,
        w_ih: Tensor::new(vec![input, 4 * k], dw_ih)?,
        w_hh: Tensor::new(vec![k, 4 * k], dw_hh)?,
        bias: Tensor::new(vec![1, 4 * k], db)?,
    })
}
