//! Minimal row-major matrix used by the learners. Deliberately small: the
//! workloads here are desk-scale and the explicit loops keep the backward
//! passes auditable.

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            debug_assert_eq!(row.len(), n_cols);
            data.extend(row);
        }
        Mat { rows: n_rows, cols: n_cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Select a subset of rows.
    pub fn take_rows(&self, indices: &[usize]) -> Mat {
        let mut out = Mat::zeros(indices.len(), self.cols);
        for (i, &r) in indices.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.row(r));
        }
        out
    }

    /// out[b, o] = sum_i input[b, i] * weight[o, i] + bias[o]
    pub fn linear_forward(&self, weight: &Mat, bias: &[f64]) -> Mat {
        debug_assert_eq!(self.cols, weight.cols);
        debug_assert_eq!(weight.rows, bias.len());
        let mut out = Mat::zeros(self.rows, weight.rows);
        for b in 0..self.rows {
            let x = self.row(b);
            let o_row = out.row_mut(b);
            for (o, bias_o) in bias.iter().enumerate() {
                let w = weight.row(o);
                let mut acc = *bias_o;
                for i in 0..x.len() {
                    acc += x[i] * w[i];
                }
                o_row[o] = acc;
            }
        }
        out
    }
}

/// Gradients of a linear layer: d_weight[o, i] += sum_b d_out[b, o] * input[b, i],
/// d_bias[o] += sum_b d_out[b, o], and d_input[b, i] = sum_o d_out[b, o] * weight[o, i].
pub fn linear_backward(
    input: &Mat,
    weight: &Mat,
    d_out: &Mat,
    d_weight: &mut [f64],
    d_bias: &mut [f64],
) -> Mat {
    debug_assert_eq!(d_out.rows, input.rows);
    debug_assert_eq!(d_out.cols, weight.rows);
    let mut d_input = Mat::zeros(input.rows, input.cols);
    for b in 0..input.rows {
        let x = input.row(b);
        let g = d_out.row(b);
        let d_x = d_input.row_mut(b);
        for (o, &g_o) in g.iter().enumerate() {
            d_bias[o] += g_o;
            let w = weight.row(o);
            let dw = &mut d_weight[o * weight.cols..(o + 1) * weight.cols];
            for i in 0..x.len() {
                dw[i] += g_o * x[i];
                d_x[i] += g_o * w[i];
            }
        }
    }
    d_input
}
