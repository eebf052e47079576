use rand::Rng;

use crate::ops::{axpy, dot, dropout, DropoutMask};
use crate::{init, Grads, NeuralError, ParamStore, Real, Result, Tensor};

/// Row-gather from an embedding table. With `pad_zero`, id 0 always yields a
/// zero row and never receives gradient.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub name: String,
    pub rows: usize,
    pub dim: usize,
    pub pad_zero: bool,
}

impl Embedding {
    pub fn new(name: impl Into<String>, rows: usize, dim: usize, pad_zero: bool) -> Self {
        Self { name: name.into(), rows, dim, pad_zero }
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) {
        store.insert(self.name.clone(), init::embedding(self.rows, self.dim, self.pad_zero, rng));
    }

    /// Looks up `ids`, returning a flat `[ids.len() x dim]` buffer.
    pub fn forward<T: Real>(&self, store: &ParamStore<T>, ids: &[usize]) -> Result<Vec<T>> {
        let table = store.get(&self.name)?;
        let mut out = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            if id >= table.rows() {
                return Err(NeuralError::Index { table: self.name.clone(), index: id, rows: table.rows() });
            }
            if self.pad_zero && id == 0 {
                out.extend(std::iter::repeat_n(T::zero(), self.dim));
            } else {
                out.extend_from_slice(table.row(id));
            }
        }
        Ok(out)
    }

    pub fn backward<T: Real>(&self, ids: &[usize], dout: &[T], grads: &mut Grads<T>) {
        for (&id, g) in ids.iter().zip(dout.chunks_exact(self.dim)) {
            if self.pad_zero && id == 0 {
                continue;
            }
            axpy(T::one(), g, grads.row(&self.name, id, self.dim));
        }
    }
}

/// Affine map `y = W x + b` with `W` stored `[output x input]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: String,
    pub bias: String,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(prefix: &str, input: usize, output: usize) -> Self {
        Self { weight: format!("{prefix}.weight"), bias: format!("{prefix}.bias"), input, output }
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) {
        store.insert(
            self.weight.clone(),
            init::xavier_uniform(&[self.output, self.input], self.input, self.output, rng),
        );
        store.insert(self.bias.clone(), Tensor::zeros(&[self.output]));
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input {
            return Err(NeuralError::Dimension(format!(
                "`{}` expects input {}, got {}",
                self.weight,
                self.input,
                x.len()
            )));
        }
        let w = store.get(&self.weight)?;
        let b = store.get(&self.bias)?;
        Ok((0..self.output).map(|o| dot(w.row(o), x) + b.data()[o]).collect())
    }

    /// Accumulates `dW`, `db` and returns `dx`.
    pub fn backward<T: Real>(&self, store: &ParamStore<T>, x: &[T], dy: &[T], grads: &mut Grads<T>) -> Result<Vec<T>> {
        let w = store.get(&self.weight)?;
        let mut dx = vec![T::zero(); self.input];
        {
            let dw = grads.dense(&self.weight, self.output * self.input);
            for (o, &g) in dy.iter().enumerate() {
                if g == T::zero() {
                    continue;
                }
                axpy(g, x, &mut dw[o * self.input..(o + 1) * self.input]);
                axpy(g, w.row(o), &mut dx);
            }
        }
        axpy(T::one(), dy, grads.dense(&self.bias, self.output));
        Ok(dx)
    }
}

/// Two-layer perceptron: affine, ReLU, dropout on the hidden activation, affine.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
    pub dropout: f64,
}

#[derive(Clone, Debug)]
pub struct MlpCache<T> {
    input: Vec<T>,
    pre: Vec<T>,
    mask: DropoutMask<T>,
    hidden: Vec<T>,
}

impl Mlp {
    pub fn new(prefix: &str, input: usize, hidden: usize, output: usize, dropout: f64) -> Self {
        Self {
            hidden: Linear::new(&format!("{prefix}.hidden"), input, hidden),
            output: Linear::new(&format!("{prefix}.out"), hidden, output),
            dropout,
        }
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) {
        self.hidden.init(store, rng);
        self.output.init(store, rng);
    }

    pub fn forward<T: Real, R: Rng + ?Sized>(
        &self,
        store: &ParamStore<T>,
        x: &[T],
        training: bool,
        rng: &mut R,
    ) -> Result<(Vec<T>, MlpCache<T>)> {
        let pre = self.hidden.forward(store, x)?;
        let act: Vec<T> = pre.iter().map(|&v| v.max(T::zero())).collect();
        let (hidden, mask) = dropout(&act, self.dropout, training, rng)?;
        let y = self.output.forward(store, &hidden)?;
        Ok((y, MlpCache { input: x.to_vec(), pre, mask, hidden }))
    }

    pub fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        cache: &MlpCache<T>,
        dy: &[T],
        grads: &mut Grads<T>,
    ) -> Result<Vec<T>> {
        let mut dh = self.output.backward(store, &cache.hidden, dy, grads)?;
        if let Some(mask) = &cache.mask {
            dh.iter_mut().zip(mask).for_each(|(d, &m)| *d *= m);
        }
        for (d, &p) in dh.iter_mut().zip(&cache.pre) {
            if p <= T::zero() {
                *d = T::zero();
            }
        }
        self.hidden.backward(store, &cache.input, &dh, grads)
    }
}

/// Character CNN: same-padded 1-D convolution over a word's character
/// embeddings followed by max-pooling over time. Sequences shorter than the
/// kernel are right-padded with zero rows first.
#[derive(Clone, Debug)]
pub struct CharCnn {
    pub weight: String,
    pub bias: String,
    pub input: usize,
    pub filters: usize,
    pub kernel: usize,
}

#[derive(Clone, Debug)]
pub struct CharCnnCache<T> {
    padded: Vec<T>,
    len: usize,
    argmax: Vec<usize>,
}

impl CharCnn {
    pub fn new(prefix: &str, input: usize, filters: usize, kernel: usize) -> Self {
        Self { weight: format!("{prefix}.weight"), bias: format!("{prefix}.bias"), input, filters, kernel }
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) {
        let fan = self.kernel * self.input;
        store.insert(self.weight.clone(), init::xavier_uniform(&[self.filters, fan], fan, self.filters, rng));
        store.insert(self.bias.clone(), Tensor::zeros(&[self.filters]));
    }

    /// `input` is a flat `[len x input]` buffer with `len >= 1`.
    pub fn forward<T: Real>(&self, store: &ParamStore<T>, input: &[T]) -> Result<(Vec<T>, CharCnnCache<T>)> {
        if input.is_empty() || !input.len().is_multiple_of(self.input) {
            return Err(NeuralError::Dimension(format!(
                "char CNN input of {} values is not a positive multiple of {}",
                input.len(),
                self.input
            )));
        }
        let len = input.len() / self.input;
        let steps = len.max(self.kernel);
        let left = (self.kernel - 1) / 2;
        let total = steps + self.kernel - 1;
        let mut padded = vec![T::zero(); total * self.input];
        padded[left * self.input..(left + len) * self.input].copy_from_slice(input);

        let w = store.get(&self.weight)?;
        let b = store.get(&self.bias)?;
        let width = self.kernel * self.input;
        let mut out = vec![T::neg_infinity(); self.filters];
        let mut argmax = vec![0; self.filters];
        for t in 0..steps {
            let window = &padded[t * self.input..t * self.input + width];
            for f in 0..self.filters {
                let v = dot(w.row(f), window) + b.data()[f];
                if v > out[f] {
                    out[f] = v;
                    argmax[f] = t;
                }
            }
        }
        Ok((out, CharCnnCache { padded, len, argmax }))
    }

    /// Returns the gradient for the unpadded input rows.
    pub fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        cache: &CharCnnCache<T>,
        dout: &[T],
        grads: &mut Grads<T>,
    ) -> Result<Vec<T>> {
        let w = store.get(&self.weight)?;
        let width = self.kernel * self.input;
        let mut dpadded = vec![T::zero(); cache.padded.len()];
        {
            let dw = grads.dense(&self.weight, self.filters * width);
            for f in 0..self.filters {
                let g = dout[f];
                if g == T::zero() {
                    continue;
                }
                let start = cache.argmax[f] * self.input;
                axpy(g, &cache.padded[start..start + width], &mut dw[f * width..(f + 1) * width]);
                axpy(g, w.row(f), &mut dpadded[start..start + width]);
            }
        }
        axpy(T::one(), dout, grads.dense(&self.bias, self.filters));
        let left = (self.kernel - 1) / 2;
        Ok(dpadded[left * self.input..(left + cache.len) * self.input].to_vec())
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Single-direction LSTM (gate order: input, forget, candidate, output).
#[derive(Clone, Debug)]
pub struct Lstm {
    pub w_ih: String,
    pub w_hh: String,
    pub bias: String,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Clone, Debug)]
pub struct LstmCache<T> {
    inputs: Vec<T>,
    len: usize,
    reverse: bool,
    /// Activated gates per processed step, `[len x 4H]`.
    gates: Vec<T>,
    /// Cell states `c_{-1}..c_{len-1}`, `[(len + 1) x H]`.
    cells: Vec<T>,
    /// Hidden states `h_{-1}..h_{len-1}`, `[(len + 1) x H]`.
    states: Vec<T>,
}

impl Lstm {
    pub fn new(prefix: &str, input: usize, hidden: usize) -> Self {
        Self {
            w_ih: format!("{prefix}.w_ih"),
            w_hh: format!("{prefix}.w_hh"),
            bias: format!("{prefix}.bias"),
            input,
            hidden,
        }
    }

    /// Xavier-uniform weights, zero bias except the forget gate at 1.0.
    pub fn init<T: Real, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) {
        let h = self.hidden;
        store.insert(self.w_ih.clone(), init::xavier_uniform(&[4 * h, self.input], self.input, 4 * h, rng));
        store.insert(self.w_hh.clone(), init::xavier_uniform(&[4 * h, h], h, 4 * h, rng));
        let mut b = Tensor::zeros(&[4 * h]);
        b.data_mut()[h..2 * h].iter_mut().for_each(|v| *v = T::one());
        store.insert(self.bias.clone(), b);
    }

    /// Runs over a flat `[len x input]` sequence (right to left when
    /// `reverse`) and returns the final hidden state.
    pub fn forward<T: Real>(&self, store: &ParamStore<T>, seq: &[T], reverse: bool) -> Result<(Vec<T>, LstmCache<T>)> {
        if !seq.len().is_multiple_of(self.input) {
            return Err(NeuralError::Dimension(format!(
                "LSTM `{}` input of {} values is not a multiple of {}",
                self.w_ih,
                seq.len(),
                self.input
            )));
        }
        let (w_ih, w_hh, bias) = (store.get(&self.w_ih)?, store.get(&self.w_hh)?, store.get(&self.bias)?);
        let h = self.hidden;
        let len = seq.len() / self.input;
        let mut gates = vec![T::zero(); len * 4 * h];
        let mut cells = vec![T::zero(); (len + 1) * h];
        let mut states = vec![T::zero(); (len + 1) * h];
        for step in 0..len {
            let row = if reverse { len - 1 - step } else { step };
            let x = &seq[row * self.input..(row + 1) * self.input];
            let (prev, next) = states.split_at_mut((step + 1) * h);
            let h_prev = &prev[step * h..];
            let z = &mut gates[step * 4 * h..(step + 1) * 4 * h];
            for (r, zr) in z.iter_mut().enumerate() {
                *zr = dot(w_ih.row(r), x) + dot(w_hh.row(r), h_prev) + bias.data()[r];
            }
            for j in 0..h {
                z[j] = sigmoid(z[j]);
                z[h + j] = sigmoid(z[h + j]);
                z[2 * h + j] = z[2 * h + j].tanh();
                z[3 * h + j] = sigmoid(z[3 * h + j]);
            }
            let (cprev, cnext) = cells.split_at_mut((step + 1) * h);
            let c_prev = &cprev[step * h..];
            let c = &mut cnext[..h];
            let h_out = &mut next[..h];
            for j in 0..h {
                c[j] = z[h + j] * c_prev[j] + z[j] * z[2 * h + j];
                h_out[j] = z[3 * h + j] * c[j].tanh();
            }
        }
        let last = states[len * h..].to_vec();
        Ok((last, LstmCache { inputs: seq.to_vec(), len, reverse, gates, cells, states }))
    }

    /// Backpropagation through time from the final hidden state. Returns the
    /// input gradient in the original (unreversed) row order.
    pub fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        cache: &LstmCache<T>,
        dh_final: &[T],
        grads: &mut Grads<T>,
    ) -> Result<Vec<T>> {
        let (w_ih, w_hh) = (store.get(&self.w_ih)?, store.get(&self.w_hh)?);
        let h = self.hidden;
        let len = cache.len;
        let mut dseq = vec![T::zero(); len * self.input];
        let mut dh = dh_final.to_vec();
        let mut dc = vec![T::zero(); h];
        let mut dz = vec![T::zero(); 4 * h];
        let mut dw_ih = vec![T::zero(); 4 * h * self.input];
        let mut dw_hh = vec![T::zero(); 4 * h * h];
        let mut db = vec![T::zero(); 4 * h];
        for step in (0..len).rev() {
            let row = if cache.reverse { len - 1 - step } else { step };
            let x = &cache.inputs[row * self.input..(row + 1) * self.input];
            let z = &cache.gates[step * 4 * h..(step + 1) * 4 * h];
            let c_prev = &cache.cells[step * h..(step + 1) * h];
            let c = &cache.cells[(step + 1) * h..(step + 2) * h];
            let h_prev = &cache.states[step * h..(step + 1) * h];
            for j in 0..h {
                let (i, f, g, o) = (z[j], z[h + j], z[2 * h + j], z[3 * h + j]);
                let tc = c[j].tanh();
                let d_o = dh[j] * tc;
                let dcj = dc[j] + dh[j] * o * (T::one() - tc * tc);
                dz[j] = dcj * g * i * (T::one() - i);
                dz[h + j] = dcj * c_prev[j] * f * (T::one() - f);
                dz[2 * h + j] = dcj * i * (T::one() - g * g);
                dz[3 * h + j] = d_o * o * (T::one() - o);
                dc[j] = dcj * f;
            }
            let dx = &mut dseq[row * self.input..(row + 1) * self.input];
            dh.iter_mut().for_each(|v| *v = T::zero());
            for r in 0..4 * h {
                let g = dz[r];
                if g == T::zero() {
                    continue;
                }
                axpy(g, x, &mut dw_ih[r * self.input..(r + 1) * self.input]);
                axpy(g, h_prev, &mut dw_hh[r * h..(r + 1) * h]);
                axpy(g, w_ih.row(r), dx);
                axpy(g, w_hh.row(r), &mut dh);
                db[r] += g;
            }
        }
        axpy(T::one(), &dw_ih, grads.dense(&self.w_ih, dw_ih.len()));
        axpy(T::one(), &dw_hh, grads.dense(&self.w_hh, dw_hh.len()));
        axpy(T::one(), &db, grads.dense(&self.bias, db.len()));
        Ok(dseq)
    }
}

/// Bidirectional LSTM whose output is `[h_forward_final; h_backward_final]`.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

#[derive(Clone, Debug)]
pub struct BiLstmCache<T> {
    fwd: LstmCache<T>,
    bwd: LstmCache<T>,
}

impl BiLstm {
    pub fn new(prefix: &str, input: usize, hidden: usize) -> Self {
        Self {
            forward: Lstm::new(&format!("{prefix}.fwd"), input, hidden),
            backward: Lstm::new(&format!("{prefix}.bwd"), input, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) {
        self.forward.init(store, rng);
        self.backward.init(store, rng);
    }

    pub fn run<T: Real>(&self, store: &ParamStore<T>, seq: &[T]) -> Result<(Vec<T>, BiLstmCache<T>)> {
        let (mut out, fwd) = self.forward.forward(store, seq, false)?;
        let (hb, bwd) = self.backward.forward(store, seq, true)?;
        out.extend(hb);
        Ok((out, BiLstmCache { fwd, bwd }))
    }

    pub fn backprop<T: Real>(
        &self,
        store: &ParamStore<T>,
        cache: &BiLstmCache<T>,
        dout: &[T],
        grads: &mut Grads<T>,
    ) -> Result<Vec<T>> {
        let h = self.hidden();
        let mut dseq = self.forward.backward(store, &cache.fwd, &dout[..h], grads)?;
        let db = self.backward.backward(store, &cache.bwd, &dout[h..], grads)?;
        axpy(T::one(), &db, &mut dseq);
        Ok(dseq)
    }
}
