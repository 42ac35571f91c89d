//! Bidirectional LSTM over a batch of variable-length sequences.
//!
//! Sequences are stored back to back in one `N x input` matrix. The input
//! projection of every step is a single matrix product; the recurrence runs
//! step by step over the sequences still active at that step, which form a
//! prefix once the batch is sorted by decreasing length.

use ndarray::{s, Array2, Axis};

use super::params::LstmParams;

#[derive(Debug, Clone)]
pub struct Layout {
    pub lengths: Vec<usize>,
    pub offsets: Vec<usize>,
    /// Sequence indices by decreasing length; ties keep input order.
    order: Vec<usize>,
}

impl Layout {
    pub fn new(lengths: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(lengths.len());
        let mut total = 0;
        for &l in lengths {
            offsets.push(total);
            total += l;
        }
        let mut order: Vec<usize> = (0..lengths.len()).collect();
        order.sort_by(|&a, &b| lengths[b].cmp(&lengths[a]));
        Self {
            lengths: lengths.to_vec(),
            offsets,
            order,
        }
    }

    pub fn total(&self) -> usize {
        self.lengths.iter().sum()
    }

    fn max_len(&self) -> usize {
        self.lengths.iter().copied().max().unwrap_or(0)
    }

    fn active(&self, step: usize) -> usize {
        self.order.iter().take_while(|&&b| self.lengths[b] > step).count()
    }

    fn row(&self, seq: usize, step: usize, reverse: bool) -> usize {
        if reverse {
            self.offsets[seq] + self.lengths[seq] - 1 - step
        } else {
            self.offsets[seq] + step
        }
    }

    pub fn rows(&self, seq: usize) -> std::ops::Range<usize> {
        self.offsets[seq]..self.offsets[seq] + self.lengths[seq]
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
struct DirectionCache {
    /// Activated gates, `N x 4H`, blocks i, f, g, o.
    gates: Array2<f64>,
    cell: Array2<f64>,
    hidden: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    layout: Layout,
    input: Array2<f64>,
    fwd: DirectionCache,
    bwd: DirectionCache,
}

impl BiLstmCache {
    pub fn layout(&self) -> &Layout {
        &self.layout
    }
}

fn run_direction(p: &LstmParams, input: &Array2<f64>, layout: &Layout, reverse: bool) -> DirectionCache {
    let hidden = p.w_hh.ncols();
    let n = layout.total();
    let mut z = input.dot(&p.w_ih.t());
    z += &p.bias;
    let mut gates = Array2::zeros((n, 4 * hidden));
    let mut cell = Array2::zeros((n, hidden));
    let mut out = Array2::zeros((n, hidden));
    let batch = layout.lengths.len();
    let mut h_state = Array2::<f64>::zeros((batch, hidden));
    let mut c_state = Array2::<f64>::zeros((batch, hidden));

    for step in 0..layout.max_len() {
        let active = layout.active(step);
        let mut pre = Array2::zeros((active, 4 * hidden));
        for k in 0..active {
            let r = layout.row(layout.order[k], step, reverse);
            pre.row_mut(k).assign(&z.row(r));
        }
        if step > 0 {
            pre += &h_state.slice(s![..active, ..]).dot(&p.w_hh.t());
        }
        for k in 0..active {
            let r = layout.row(layout.order[k], step, reverse);
            let pre_k = pre.row(k);
            let pre_k = pre_k.as_slice().unwrap();
            let mut g_row = gates.row_mut(r);
            let g_row = g_row.as_slice_mut().unwrap();
            let mut c_row = c_state.row_mut(k);
            let c_row = c_row.as_slice_mut().unwrap();
            let mut h_row = h_state.row_mut(k);
            let h_row = h_row.as_slice_mut().unwrap();
            for j in 0..hidden {
                let i = sigmoid(pre_k[j]);
                let f = sigmoid(pre_k[hidden + j]);
                let g = pre_k[2 * hidden + j].tanh();
                let o = sigmoid(pre_k[3 * hidden + j]);
                let c = f * c_row[j] + i * g;
                c_row[j] = c;
                h_row[j] = o * c.tanh();
                g_row[j] = i;
                g_row[hidden + j] = f;
                g_row[2 * hidden + j] = g;
                g_row[3 * hidden + j] = o;
            }
            cell.row_mut(r).assign(&c_state.row(k));
            out.row_mut(r).assign(&h_state.row(k));
        }
    }
    DirectionCache {
        gates,
        cell,
        hidden: out,
    }
}

/// Returns `N x 2H` outputs (forward half first) and the cache for
/// [`backward`].
pub fn forward(
    fwd: &LstmParams,
    bwd: &LstmParams,
    input: Array2<f64>,
    lengths: &[usize],
) -> (Array2<f64>, BiLstmCache) {
    let layout = Layout::new(lengths);
    assert_eq!(input.nrows(), layout.total(), "packed input rows");
    let f = run_direction(fwd, &input, &layout, false);
    let b = run_direction(bwd, &input, &layout, true);
    let hidden = fwd.w_hh.ncols();
    let mut out = Array2::zeros((layout.total(), 2 * hidden));
    out.slice_mut(s![.., ..hidden]).assign(&f.hidden);
    out.slice_mut(s![.., hidden..]).assign(&b.hidden);
    (
        out,
        BiLstmCache {
            layout,
            input,
            fwd: f,
            bwd: b,
        },
    )
}

/// Gradient wrt the pre-activations of every step; accumulates the
/// recurrent weight gradient into `d_w_hh`.
fn backprop_direction(
    p: &LstmParams,
    cache: &DirectionCache,
    layout: &Layout,
    reverse: bool,
    d_out: ndarray::ArrayView2<f64>,
    d_w_hh: &mut Array2<f64>,
) -> Array2<f64> {
    let hidden = p.w_hh.ncols();
    let n = layout.total();
    let batch = layout.lengths.len();
    let mut dz_all = Array2::zeros((n, 4 * hidden));
    let mut dh_carry = Array2::<f64>::zeros((batch, hidden));
    let mut dc_carry = Array2::<f64>::zeros((batch, hidden));

    for step in (0..layout.max_len()).rev() {
        let active = layout.active(step);
        let mut dz = Array2::zeros((active, 4 * hidden));
        for k in 0..active {
            let seq = layout.order[k];
            let r = layout.row(seq, step, reverse);
            let prev = (step > 0).then(|| layout.row(seq, step - 1, reverse));
            let g = cache.gates.row(r);
            let g = g.as_slice().unwrap();
            let c = cache.cell.row(r);
            let c = c.as_slice().unwrap();
            let d_o = d_out.row(r);
            let mut dhc = dh_carry.row_mut(k);
            let dhc = dhc.as_slice_mut().unwrap();
            let mut dcc = dc_carry.row_mut(k);
            let dcc = dcc.as_slice_mut().unwrap();
            let mut dz_k = dz.row_mut(k);
            let dz_k = dz_k.as_slice_mut().unwrap();
            for j in 0..hidden {
                let (i, f, gg, o) = (g[j], g[hidden + j], g[2 * hidden + j], g[3 * hidden + j]);
                let tc = c[j].tanh();
                let c_prev = prev.map_or(0.0, |pr| cache.cell[[pr, j]]);
                let dh = d_o[j] + dhc[j];
                let dc = dcc[j] + dh * o * (1.0 - tc * tc);
                dz_k[j] = dc * gg * i * (1.0 - i);
                dz_k[hidden + j] = dc * c_prev * f * (1.0 - f);
                dz_k[2 * hidden + j] = dc * i * (1.0 - gg * gg);
                dz_k[3 * hidden + j] = dh * tc * o * (1.0 - o);
                dcc[j] = dc * f;
            }
            dz_all.row_mut(r).assign(&dz.row(k));
        }
        if step > 0 {
            let mut h_prev = Array2::zeros((active, hidden));
            for k in 0..active {
                let r = layout.row(layout.order[k], step - 1, reverse);
                h_prev.row_mut(k).assign(&cache.hidden.row(r));
            }
            *d_w_hh += &dz.t().dot(&h_prev);
            let carry = dz.dot(&p.w_hh);
            dh_carry.slice_mut(s![..active, ..]).assign(&carry);
        }
    }
    dz_all
}

/// Accumulates parameter gradients into `grad_fwd`/`grad_bwd` and returns
/// the gradient wrt the packed input.
pub fn backward(
    fwd: &LstmParams,
    bwd: &LstmParams,
    cache: &BiLstmCache,
    d_out: &Array2<f64>,
    grad_fwd: &mut LstmParams,
    grad_bwd: &mut LstmParams,
) -> Array2<f64> {
    let hidden = fwd.w_hh.ncols();
    let layout = &cache.layout;
    let dz_f = backprop_direction(
        fwd,
        &cache.fwd,
        layout,
        false,
        d_out.slice(s![.., ..hidden]),
        &mut grad_fwd.w_hh,
    );
    let dz_b = backprop_direction(
        bwd,
        &cache.bwd,
        layout,
        true,
        d_out.slice(s![.., hidden..]),
        &mut grad_bwd.w_hh,
    );
    grad_fwd.w_ih += &dz_f.t().dot(&cache.input);
    grad_bwd.w_ih += &dz_b.t().dot(&cache.input);
    grad_fwd.bias += &dz_f.sum_axis(Axis(0)).insert_axis(Axis(0));
    grad_bwd.bias += &dz_b.sum_axis(Axis(0)).insert_axis(Axis(0));
    let mut d_input = dz_f.dot(&fwd.w_ih);
    d_input += &dz_b.dot(&bwd.w_ih);
    d_input
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-0.8..0.8))
    }

    fn params(rng: &mut ChaCha8Rng, input: usize, hidden: usize) -> LstmParams {
        LstmParams {
            w_ih: random(rng, 4 * hidden, input),
            w_hh: random(rng, 4 * hidden, hidden),
            bias: random(rng, 1, 4 * hidden),
        }
    }

    #[test]
    fn batching_matches_one_sequence_at_a_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (f, b) = (params(&mut rng, 3, 4), params(&mut rng, 3, 4));
        let lengths = [2, 5, 1, 5];
        let x = random(&mut rng, 13, 3);
        let (batched, _) = forward(&f, &b, x.clone(), &lengths);
        let layout = Layout::new(&lengths);
        for (seq, &len) in lengths.iter().enumerate() {
            let rows = layout.rows(seq);
            let (alone, _) = forward(&f, &b, x.slice(s![rows.clone(), ..]).to_owned(), &[len]);
            let diff = (&alone - &batched.slice(s![rows, ..])).mapv(f64::abs);
            assert!(diff.iter().all(|&d| d < 1e-14));
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (f, b) = (params(&mut rng, 3, 2), params(&mut rng, 3, 2));
        let lengths = [3, 1, 2];
        let x = random(&mut rng, 6, 3);
        let weights = random(&mut rng, 6, 4);
        let objective = |x: &Array2<f64>| (&forward(&f, &b, x.clone(), &lengths).0 * &weights).sum();
        let (_, cache) = forward(&f, &b, x.clone(), &lengths);
        let mut gf = LstmParams { w_ih: f.w_ih.clone() * 0.0, w_hh: f.w_hh.clone() * 0.0, bias: f.bias.clone() * 0.0 };
        let mut gb = gf.clone();
        let dx = backward(&f, &b, &cache, &weights, &mut gf, &mut gb);
        let h = 1e-6;
        for r in 0..6 {
            for c in 0..3 {
                let mut xp = x.clone();
                xp[[r, c]] += h;
                let mut xm = x.clone();
                xm[[r, c]] -= h;
                let fd = (objective(&xp) - objective(&xm)) / (2.0 * h);
                assert!((fd - dx[[r, c]]).abs() < 1e-7, "{r},{c}: {fd} vs {}", dx[[r, c]]);
            }
        }
        let mut fp = f.clone();
        fp.w_hh[[1, 1]] += h;
        let mut fm = f.clone();
        fm.w_hh[[1, 1]] -= h;
        let obj_w = |p: &LstmParams| (&forward(p, &b, x.clone(), &lengths).0 * &weights).sum();
        let fd = (obj_w(&fp) - obj_w(&fm)) / (2.0 * h);
        assert!((fd - gf.w_hh[[1, 1]]).abs() < 1e-7);
    }
}
