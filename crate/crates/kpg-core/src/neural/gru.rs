//! GRU sequence encoder and token decoder with hand-written
//! backward-through-time.
//!
//! Gate layout per step, with `x` the embedded token and `h` the previous
//! hidden state:
//!
//! ```text
//! r = sigmoid(x Wr + h Ur + br)
//! z = sigmoid(x Wz + h Uz + bz)
//! n = tanh  (x Wn + (r .* h) Un + bn)
//! h' = (1 - z) .* n + z .* h
//! ```
//!
//! The empty sequence encodes to the zero state.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KpgError, Result};
use crate::tensor::{add_vec, outer_acc, vec_matmul, vec_matmul_t, Tensor2};

use super::dense::{Dense, DenseCache};
use super::ops::sigmoid;
use super::param::{Param, Parameterized};

pub type TokenId = usize;

/// Trainable token lookup table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Embedding {
    pub table: Param,
    name: String,
}

impl Embedding {
    pub fn new(name: &str, vocab: usize, dim: usize, rng: &mut impl Rng) -> Self {
        Embedding {
            table: Param::glorot(vocab, dim, rng),
            name: name.to_string(),
        }
    }

    pub fn vocab(&self) -> usize {
        self.table.value.rows()
    }

    pub fn lookup(&self, id: TokenId) -> Result<&[f64]> {
        if id >= self.vocab() {
            return Err(KpgError::Input(format!(
                "{}: token id {id} outside vocabulary of size {}",
                self.name,
                self.vocab()
            )));
        }
        Ok(self.table.value.row(id))
    }

    pub fn acc_grad(&mut self, id: TokenId, d: &[f64]) {
        add_vec(self.table.grad.row_mut(id), d);
    }
}

impl Parameterized for Embedding {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param)) {
        f(&format!("{}.table", self.name), &self.table);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        let n = self.name.clone();
        f(&format!("{n}.table"), &mut self.table);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GruCell {
    wr: Param,
    ur: Param,
    br: Param,
    wz: Param,
    uz: Param,
    bz: Param,
    wn: Param,
    un: Param,
    bn: Param,
    name: String,
}

pub struct GruStepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
}

impl GruCell {
    pub fn new(name: &str, in_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        GruCell {
            wr: Param::glorot(in_dim, hidden, rng),
            ur: Param::glorot(hidden, hidden, rng),
            br: Param::zeros(1, hidden),
            wz: Param::glorot(in_dim, hidden, rng),
            uz: Param::glorot(hidden, hidden, rng),
            bz: Param::zeros(1, hidden),
            wn: Param::glorot(in_dim, hidden, rng),
            un: Param::glorot(hidden, hidden, rng),
            bn: Param::zeros(1, hidden),
            name: name.to_string(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.ur.value.rows()
    }

    pub fn step(&self, x: &[f64], h: &[f64]) -> (Vec<f64>, GruStepCache) {
        let hid = self.hidden();
        let mut ar = vec_matmul(x, &self.wr.value);
        add_vec(&mut ar, &vec_matmul(h, &self.ur.value));
        add_vec(&mut ar, self.br.value.row(0));
        let r: Vec<f64> = ar.iter().map(|&v| sigmoid(v)).collect();

        let mut az = vec_matmul(x, &self.wz.value);
        add_vec(&mut az, &vec_matmul(h, &self.uz.value));
        add_vec(&mut az, self.bz.value.row(0));
        let z: Vec<f64> = az.iter().map(|&v| sigmoid(v)).collect();

        let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
        let mut an = vec_matmul(x, &self.wn.value);
        add_vec(&mut an, &vec_matmul(&rh, &self.un.value));
        add_vec(&mut an, self.bn.value.row(0));
        let n: Vec<f64> = an.iter().map(|&v| v.tanh()).collect();

        let mut h_next = vec![0.0; hid];
        for i in 0..hid {
            h_next[i] = (1.0 - z[i]) * n[i] + z[i] * h[i];
        }
        let cache = GruStepCache {
            x: x.to_vec(),
            h_prev: h.to_vec(),
            r,
            z,
            n,
        };
        (h_next, cache)
    }

    /// One step of backward-through-time. Returns `(dx, dh_prev)`.
    pub fn backward_step(&mut self, c: &GruStepCache, dh_next: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hid = self.hidden();
        let mut dh_prev = vec![0.0; hid];
        let mut dn = vec![0.0; hid];
        let mut dz = vec![0.0; hid];
        for i in 0..hid {
            dz[i] = dh_next[i] * (c.h_prev[i] - c.n[i]);
            dn[i] = dh_next[i] * (1.0 - c.z[i]);
            dh_prev[i] += dh_next[i] * c.z[i];
        }

        let da_n: Vec<f64> = dn.iter().zip(&c.n).map(|(d, n)| d * (1.0 - n * n)).collect();
        let rh: Vec<f64> = c.r.iter().zip(&c.h_prev).map(|(a, b)| a * b).collect();
        outer_acc(&mut self.wn.grad, &c.x, &da_n);
        outer_acc(&mut self.un.grad, &rh, &da_n);
        add_vec(self.bn.grad.row_mut(0), &da_n);
        let d_rh = vec_matmul_t(&da_n, &self.un.value);
        let mut dr = vec![0.0; hid];
        for i in 0..hid {
            dr[i] = d_rh[i] * c.h_prev[i];
            dh_prev[i] += d_rh[i] * c.r[i];
        }

        let da_r: Vec<f64> = dr.iter().zip(&c.r).map(|(d, r)| d * r * (1.0 - r)).collect();
        outer_acc(&mut self.wr.grad, &c.x, &da_r);
        outer_acc(&mut self.ur.grad, &c.h_prev, &da_r);
        add_vec(self.br.grad.row_mut(0), &da_r);
        add_vec(&mut dh_prev, &vec_matmul_t(&da_r, &self.ur.value));

        let da_z: Vec<f64> = dz.iter().zip(&c.z).map(|(d, z)| d * z * (1.0 - z)).collect();
        outer_acc(&mut self.wz.grad, &c.x, &da_z);
        outer_acc(&mut self.uz.grad, &c.h_prev, &da_z);
        add_vec(self.bz.grad.row_mut(0), &da_z);
        add_vec(&mut dh_prev, &vec_matmul_t(&da_z, &self.uz.value));

        let mut dx = vec_matmul_t(&da_r, &self.wr.value);
        add_vec(&mut dx, &vec_matmul_t(&da_z, &self.wz.value));
        add_vec(&mut dx, &vec_matmul_t(&da_n, &self.wn.value));
        (dx, dh_prev)
    }
}

impl Parameterized for GruCell {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param)) {
        let n = &self.name;
        f(&format!("{n}.wr"), &self.wr);
        f(&format!("{n}.ur"), &self.ur);
        f(&format!("{n}.br"), &self.br);
        f(&format!("{n}.wz"), &self.wz);
        f(&format!("{n}.uz"), &self.uz);
        f(&format!("{n}.bz"), &self.bz);
        f(&format!("{n}.wn"), &self.wn);
        f(&format!("{n}.un"), &self.un);
        f(&format!("{n}.bn"), &self.bn);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        let n = self.name.clone();
        f(&format!("{n}.wr"), &mut self.wr);
        f(&format!("{n}.ur"), &mut self.ur);
        f(&format!("{n}.br"), &mut self.br);
        f(&format!("{n}.wz"), &mut self.wz);
        f(&format!("{n}.uz"), &mut self.uz);
        f(&format!("{n}.bz"), &mut self.bz);
        f(&format!("{n}.wn"), &mut self.wn);
        f(&format!("{n}.un"), &mut self.un);
        f(&format!("{n}.bn"), &mut self.bn);
    }
}

/// Token-sequence encoder: embedding lookup plus GRU recurrence; the final
/// hidden state is the sequence representation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GruEncoder {
    pub embed: Embedding,
    pub cell: GruCell,
}

pub struct EncodeCache {
    tokens: Vec<TokenId>,
    steps: Vec<GruStepCache>,
}

impl GruEncoder {
    pub fn new(name: &str, vocab: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        GruEncoder {
            embed: Embedding::new(&format!("{name}.embed"), vocab, hidden, rng),
            cell: GruCell::new(&format!("{name}.cell"), hidden, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.cell.hidden()
    }

    pub fn encode(&self, tokens: &[TokenId]) -> Result<(Vec<f64>, EncodeCache)> {
        let mut h = vec![0.0; self.hidden()];
        let mut steps = Vec::with_capacity(tokens.len());
        for &t in tokens {
            let x = self.embed.lookup(t)?;
            let (h_next, cache) = self.cell.step(x, &h);
            steps.push(cache);
            h = h_next;
        }
        Ok((
            h,
            EncodeCache {
                tokens: tokens.to_vec(),
                steps,
            },
        ))
    }

    pub fn backward(&mut self, cache: &EncodeCache, dh_final: &[f64]) {
        let mut dh = dh_final.to_vec();
        for (step, &tok) in cache.steps.iter().zip(&cache.tokens).rev() {
            let (dx, dh_prev) = self.cell.backward_step(step, &dh);
            self.embed.acc_grad(tok, &dx);
            dh = dh_prev;
        }
    }
}

impl Parameterized for GruEncoder {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param)) {
        self.embed.visit(f);
        self.cell.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.embed.visit_mut(f);
        self.cell.visit_mut(f);
    }
}

/// One GRU step followed by a dense projection onto the vocabulary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GruDecoder {
    pub embed: Embedding,
    pub cell: GruCell,
    pub proj: Dense,
}

pub struct DecodeStepCache {
    token: TokenId,
    step: GruStepCache,
    proj: DenseCache,
}

impl GruDecoder {
    pub fn new(name: &str, vocab: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        GruDecoder {
            embed: Embedding::new(&format!("{name}.embed"), vocab, hidden, rng),
            cell: GruCell::new(&format!("{name}.cell"), hidden, hidden, rng),
            proj: Dense::new(&format!("{name}.proj"), hidden, vocab, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.cell.hidden()
    }

    pub fn vocab(&self) -> usize {
        self.embed.vocab()
    }

    pub fn step(
        &self,
        h: &[f64],
        prev_token: TokenId,
    ) -> Result<(Vec<f64>, Vec<f64>, DecodeStepCache)> {
        let x = self.embed.lookup(prev_token)?;
        let (h_next, step) = self.cell.step(x, h);
        let (logits, proj) = self.proj.forward(&Tensor2::from_row(&h_next))?;
        Ok((
            logits.row(0).to_vec(),
            h_next,
            DecodeStepCache {
                token: prev_token,
                step,
                proj,
            },
        ))
    }

    /// Backward for one step. `d_logits` comes from the output loss,
    /// `dh_next` from later steps; returns the gradient for the incoming
    /// hidden state.
    pub fn backward_step(
        &mut self,
        cache: &DecodeStepCache,
        d_logits: &[f64],
        dh_next: &[f64],
    ) -> Vec<f64> {
        let d_from_proj = self
            .proj
            .backward(&cache.proj, &Tensor2::from_row(d_logits));
        let mut dh_total = d_from_proj.row(0).to_vec();
        add_vec(&mut dh_total, dh_next);
        let (dx, dh_prev) = self.cell.backward_step(&cache.step, &dh_total);
        self.embed.acc_grad(cache.token, &dx);
        dh_prev
    }

    /// Greedy decode from an initial hidden state. Emits until `eos` or
    /// `max_len` tokens; ties in the argmax break toward the lowest id.
    pub fn greedy_decode(
        &self,
        h0: &[f64],
        sos: TokenId,
        eos: TokenId,
        max_len: usize,
    ) -> Result<Vec<TokenId>> {
        let mut out = Vec::new();
        let mut h = h0.to_vec();
        let mut prev = sos;
        for _ in 0..max_len {
            let (logits, h_next, _) = self.step(&h, prev)?;
            let mut best = 0usize;
            for (i, &v) in logits.iter().enumerate() {
                if v > logits[best] {
                    best = i;
                }
            }
            if best == eos {
                break;
            }
            out.push(best);
            prev = best;
            h = h_next;
        }
        Ok(out)
    }
}

impl Parameterized for GruDecoder {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param)) {
        self.embed.visit(f);
        self.cell.visit(f);
        self.proj.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.embed.visit_mut(f);
        self.cell.visit_mut(f);
        self.proj.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zeroed(cell: &mut GruCell) {
        cell.visit_mut(&mut |_, p| p.value.fill(0.0));
    }

    #[test]
    fn empty_sequence_encodes_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = GruEncoder::new("enc", 5, 4, &mut rng);
        let (h, _) = enc.encode(&[]).unwrap();
        assert_eq!(h, vec![0.0; 4]);
    }

    #[test]
    fn zero_weights_halve_state_each_step() {
        // sigma(0) = 0.5, tanh(0) = 0 so h' = 0.5 h; from zero state the
        // final state stays zero.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut enc = GruEncoder::new("enc", 5, 3, &mut rng);
        zeroed(&mut enc.cell);
        enc.embed.table.value.fill(0.0);
        let (h, _) = enc.encode(&[1, 2, 3]).unwrap();
        assert_eq!(h, vec![0.0; 3]);

        let (h_next, _) = enc.cell.step(&[0.0; 3], &[1.0, -2.0, 4.0]);
        assert_eq!(h_next, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn out_of_vocabulary_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = GruEncoder::new("enc", 5, 3, &mut rng);
        assert!(enc.encode(&[5]).is_err());
    }

    #[test]
    fn matches_scalar_gate_oracle() {
        // unrolled per-gate oracle over a length-3 sequence
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let enc = GruEncoder::new("enc", 6, 3, &mut rng);
        let tokens = [2usize, 0, 5];
        let (h, _) = enc.encode(&tokens).unwrap();

        let hid = 3;
        let mut oh = vec![0.0f64; hid];
        for &t in &tokens {
            let x = enc.embed.table.value.row(t);
            let mut next = vec![0.0; hid];
            for j in 0..hid {
                let mut ar = enc.cell.br.value.get(0, j);
                let mut az = enc.cell.bz.value.get(0, j);
                for k in 0..hid {
                    ar += x[k] * enc.cell.wr.value.get(k, j) + oh[k] * enc.cell.ur.value.get(k, j);
                    az += x[k] * enc.cell.wz.value.get(k, j) + oh[k] * enc.cell.uz.value.get(k, j);
                }
                let r_j = 1.0 / (1.0 + (-ar).exp());
                let z_j = 1.0 / (1.0 + (-az).exp());
                // n gate needs every r_k, recompute inline
                let mut an = enc.cell.bn.value.get(0, j);
                for k in 0..hid {
                    let mut ark = enc.cell.br.value.get(0, k);
                    for m in 0..hid {
                        ark += x[m] * enc.cell.wr.value.get(m, k)
                            + oh[m] * enc.cell.ur.value.get(m, k);
                    }
                    let rk = 1.0 / (1.0 + (-ark).exp());
                    an += x[k] * enc.cell.wn.value.get(k, j) + rk * oh[k] * enc.cell.un.value.get(k, j);
                }
                let n_j = an.tanh();
                next[j] = (1.0 - z_j) * n_j + z_j * oh[j];
                let _ = r_j;
            }
            oh = next;
        }
        for (a, b) in h.iter().zip(&oh) {
            assert!((a - b).abs() < 1e-10, "gru mismatch: {a} vs {b}");
        }
    }

    #[test]
    fn decoder_zero_weights_uniform_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut dec = GruDecoder::new("dec", 4, 3, &mut rng);
        zeroed(&mut dec.cell);
        dec.embed.table.value.fill(0.0);
        dec.proj.w.value.fill(0.0);
        dec.proj.b.value.fill(0.0);
        let h = vec![1.0, 2.0, -4.0];
        let (logits, h_next, _) = dec.step(&h, 1).unwrap();
        assert_eq!(logits, vec![0.0; 4]);
        assert_eq!(h_next, vec![0.5, 1.0, -2.0]);
    }

    #[test]
    fn decoder_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dec = GruDecoder::new("dec", 6, 4, &mut rng);
        let h = vec![0.3, -0.1, 0.7, 0.2];
        let a = dec.greedy_decode(&h, 4, 5, 8).unwrap();
        let b = dec.greedy_decode(&h, 4, 5, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decoder_that_argmaxes_eos_emits_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut dec = GruDecoder::new("dec", 4, 3, &mut rng);
        // push the eos logit up via the projection bias
        dec.proj.b.value.set(0, 3, 100.0);
        let out = dec.greedy_decode(&[0.1, 0.2, 0.3], 2, 3, 10).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn decode_length_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for seed in 0..50u64 {
            let mut r2 = ChaCha8Rng::seed_from_u64(seed);
            let dec = GruDecoder::new("dec", 7, 3, &mut r2);
            let h: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let out = dec.greedy_decode(&h, 5, 6, 4).unwrap();
            assert!(out.len() <= 4);
        }
    }
}
