//! Candidate response generator: a conditional VAE over context-response
//! text pairs harvested from key graphs. Contexts are encoded together with
//! the event's root post; generation samples the learned prior, decodes a
//! response embedding, and spells it out token by token.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{GraphScorer, GraphView};
use crate::data::Vocabulary;
use crate::error::{KpgError, Result};
use crate::neural::{
    cross_entropy, softmax, softmax_ce_grad, GruDecoder, GruEncoder, Mlp, Param, Parameterized,
    TokenId,
};
use crate::tensor::{add_vec, Tensor2};

use crate::ens::{CandidateGraph, KeyGraphState};

/// Diagonal Gaussian over the latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGaussian {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
}

impl LatentGaussian {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// One training example: the context node's tokens, the event root's
/// tokens, and the response node's tokens.
#[derive(Debug, Clone)]
pub struct CrgPair {
    pub context: Vec<TokenId>,
    pub root: Vec<TokenId>,
    pub response: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrgLossParts {
    pub total: f64,
    pub recon_sum: f64,
    pub kl_sum: f64,
    pub kl_per_pair: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrgModel {
    /// Shared encoder for context and response texts.
    gru_text: GruEncoder,
    /// Separate encoder for the root post.
    gru_root: GruEncoder,
    mlp_mu: Mlp,
    mlp_logvar: Mlp,
    mlp_decode: Mlp,
    mlp_prior: Mlp,
    token_decoder: GruDecoder,
    z_dim: usize,
    vocab_size: usize,
}

impl CrgModel {
    /// `vocab_size` is the dataset vocabulary width; the GRUs get two extra
    /// ids for start and end markers.
    pub fn new(vocab_size: usize, hidden: usize, z_dim: usize, rng: &mut impl Rng) -> Self {
        let table = vocab_size + 2;
        CrgModel {
            gru_text: GruEncoder::new("crg.text", table, hidden, rng),
            gru_root: GruEncoder::new("crg.root", table, hidden, rng),
            mlp_mu: Mlp::new("crg.mu", &[3 * hidden, hidden, z_dim], rng),
            mlp_logvar: Mlp::new("crg.logvar", &[3 * hidden, hidden, z_dim], rng),
            mlp_decode: Mlp::new("crg.decode", &[z_dim + 2 * hidden, hidden, hidden], rng),
            mlp_prior: Mlp::new("crg.prior", &[2 * hidden, hidden, 2 * z_dim], rng),
            token_decoder: GruDecoder::new("crg.tok", table, hidden, rng),
            z_dim,
            vocab_size,
        }
    }

    pub fn hidden(&self) -> usize {
        self.gru_text.hidden()
    }

    pub fn z_dim(&self) -> usize {
        self.z_dim
    }

    pub fn sos(&self) -> TokenId {
        self.vocab_size
    }

    pub fn eos(&self) -> TokenId {
        self.vocab_size + 1
    }

    /// Context encoding `GRU1(text(u)) || GRU2(text(r))` and response
    /// encoding `GRU1(text(v))`.
    pub fn encode_pair(
        &self,
        context: &[TokenId],
        root: &[TokenId],
        response: &[TokenId],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let (h_ctx, _) = self.gru_text.encode(context)?;
        let (h_root, _) = self.gru_root.encode(root)?;
        let mut h_u = h_ctx;
        h_u.extend_from_slice(&h_root);
        let (h_v, _) = self.gru_text.encode(response)?;
        Ok((h_u, h_v))
    }

    /// Posterior `q(z | h_u, h_v)`.
    pub fn cvae_posterior(&self, h_u: &[f64], h_v: &[f64]) -> Result<LatentGaussian> {
        let mut input = h_u.to_vec();
        input.extend_from_slice(h_v);
        let (mu, _) = self.mlp_mu.forward(&Tensor2::from_row(&input))?;
        let (logvar, _) = self.mlp_logvar.forward(&Tensor2::from_row(&input))?;
        Ok(LatentGaussian {
            mu: mu.row(0).to_vec(),
            logvar: logvar.row(0).to_vec(),
        })
    }

    /// Learned prior `p(z | h_u)`.
    pub fn cvae_prior(&self, h_u: &[f64]) -> Result<LatentGaussian> {
        let (out, _) = self.mlp_prior.forward(&Tensor2::from_row(h_u))?;
        let row = out.row(0);
        Ok(LatentGaussian {
            mu: row[..self.z_dim].to_vec(),
            logvar: row[self.z_dim..].to_vec(),
        })
    }

    /// Decoded response embedding `MLP(z || h_u)`.
    pub fn decode_embedding(&self, z: &[f64], h_u: &[f64]) -> Result<Vec<f64>> {
        let mut input = z.to_vec();
        input.extend_from_slice(h_u);
        let (out, _) = self.mlp_decode.forward(&Tensor2::from_row(&input))?;
        Ok(out.row(0).to_vec())
    }

    /// Greedy token decoding seeded by a response embedding. Start and end
    /// markers never appear in the output, which holds dataset-vocabulary
    /// ids only.
    pub fn decode_tokens(&self, embedding: &[f64], max_len: usize) -> Result<Vec<TokenId>> {
        let raw = self
            .token_decoder
            .greedy_decode(embedding, self.sos(), self.eos(), max_len)?;
        Ok(raw.into_iter().filter(|&t| t < self.vocab_size).collect())
    }

    /// Tops up the candidate pool with `count` generated responses, each
    /// attached to a uniformly sampled key-graph node. Returns new node ids.
    pub fn generate_responses(
        &self,
        graph: &mut CandidateGraph,
        state: &KeyGraphState,
        vocab: &Vocabulary,
        count: usize,
        max_len: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<usize>> {
        let mut new_ids = Vec::with_capacity(count);
        if state.node_count() == 0 {
            return Ok(new_ids);
        }
        let root_tokens = graph.tokens(0).to_vec();
        for _ in 0..count {
            let context = state.members()[rng.gen_range(0..state.node_count())];
            let (h_ctx, _) = self.gru_text.encode(graph.tokens(context))?;
            let (h_root, _) = self.gru_root.encode(&root_tokens)?;
            let mut h_u = h_ctx;
            h_u.extend_from_slice(&h_root);
            let prior = self.cvae_prior(&h_u)?;
            let noise: Vec<f64> = (0..self.z_dim).map(|_| standard_normal(rng)).collect();
            let z = sample_latent(&prior, &noise)?;
            let embedding = self.decode_embedding(&z, &h_u)?;
            let tokens = self.decode_tokens(&embedding, max_len)?;
            let feature = vocab.feature_row(&tokens);
            new_ids.push(graph.add_generated(context, tokens, feature)?);
        }
        Ok(new_ids)
    }

    /// View of a key graph with every non-root feature row replaced by its
    /// featurized posterior reconstruction.
    pub fn reconstructed_view(
        &self,
        state: &KeyGraphState,
        graph: &CandidateGraph,
        vocab: &Vocabulary,
        max_len: usize,
        rng: &mut impl Rng,
    ) -> Result<GraphView> {
        let base = state.view();
        let mut x = base.x.clone();
        let root_tokens = graph.tokens(0).to_vec();
        for &(u, v) in state.edges() {
            let (h_u, h_v) = self.encode_pair(graph.tokens(u), &root_tokens, graph.tokens(v))?;
            let posterior = self.cvae_posterior(&h_u, &h_v)?;
            let noise: Vec<f64> = (0..self.z_dim).map(|_| standard_normal(rng)).collect();
            let z = sample_latent(&posterior, &noise)?;
            let embedding = self.decode_embedding(&z, &h_u)?;
            let tokens = self.decode_tokens(&embedding, max_len)?;
            let row = vocab.feature_row(&tokens);
            let member = state
                .member_index(v)
                .ok_or_else(|| KpgError::Input("edge target not in key graph".into()))?;
            x.row_mut(member).copy_from_slice(&row);
        }
        Ok(GraphView::new(x, base.edges))
    }

    /// Reward-weighted CVAE loss over a pair batch, with gradient
    /// accumulation: `reward * sum_pairs(mse(h_hat, h_v) + KL(q || p))`.
    /// The reconstruction target is held constant; encoder gradients flow
    /// through the posterior, prior, and decoder inputs.
    pub fn loss_crg(
        &mut self,
        pairs: &[CrgPair],
        noises: &[Vec<f64>],
        reward: f64,
    ) -> Result<CrgLossParts> {
        self.loss_crg_impl(pairs, noises, reward, true)
    }

    /// Pure evaluation of the same loss, for gradient checks.
    pub fn loss_crg_value(&self, pairs: &[CrgPair], noises: &[Vec<f64>], reward: f64) -> Result<f64> {
        let mut me = self.clone();
        Ok(me.loss_crg_impl(pairs, noises, reward, false)?.total)
    }

    fn loss_crg_impl(
        &mut self,
        pairs: &[CrgPair],
        noises: &[Vec<f64>],
        reward: f64,
        backprop: bool,
    ) -> Result<CrgLossParts> {
        if pairs.len() != noises.len() {
            return Err(KpgError::Input(
                "loss_crg: one noise vector per pair required".into(),
            ));
        }
        let mut parts = CrgLossParts {
            total: 0.0,
            recon_sum: 0.0,
            kl_sum: 0.0,
            kl_per_pair: Vec::with_capacity(pairs.len()),
        };
        let h_dim = self.hidden();
        let z_dim = self.z_dim;
        for (pair, noise) in pairs.iter().zip(noises) {
            let (h_ctx, ctx_cache) = self.gru_text.encode(&pair.context)?;
            let (h_root, root_cache) = self.gru_root.encode(&pair.root)?;
            let mut h_u = h_ctx;
            h_u.extend_from_slice(&h_root);
            let (h_v, v_cache) = self.gru_text.encode(&pair.response)?;

            let mut post_in = h_u.clone();
            post_in.extend_from_slice(&h_v);
            let post_in = Tensor2::from_row(&post_in);
            let (mu_t, mu_cache) = self.mlp_mu.forward(&post_in)?;
            let (lv_t, lv_cache) = self.mlp_logvar.forward(&post_in)?;
            let mu_q = mu_t.row(0).to_vec();
            let lv_q = lv_t.row(0).to_vec();

            let h_u_t = Tensor2::from_row(&h_u);
            let (prior_t, prior_cache) = self.mlp_prior.forward(&h_u_t)?;
            let mu_p = prior_t.row(0)[..z_dim].to_vec();
            let lv_p = prior_t.row(0)[z_dim..].to_vec();

            let q = LatentGaussian {
                mu: mu_q.clone(),
                logvar: lv_q.clone(),
            };
            let z = sample_latent(&q, noise)?;

            let mut dec_in = z.clone();
            dec_in.extend_from_slice(&h_u);
            let dec_in = Tensor2::from_row(&dec_in);
            let (h_hat_t, dec_cache) = self.mlp_decode.forward(&dec_in)?;
            let h_hat = h_hat_t.row(0);

            let recon: f64 = h_hat
                .iter()
                .zip(&h_v)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / h_dim as f64;
            let kl = kl_divergence(&mu_q, &lv_q, &mu_p, &lv_p);
            parts.recon_sum += recon;
            parts.kl_sum += kl;
            parts.kl_per_pair.push(kl);

            if !backprop {
                continue;
            }
            let c = reward;
            // reconstruction -> decoder
            let d_h_hat: Vec<f64> = h_hat
                .iter()
                .zip(&h_v)
                .map(|(a, b)| c * 2.0 * (a - b) / h_dim as f64)
                .collect();
            let d_dec_in = self
                .mlp_decode
                .backward(&dec_cache, &Tensor2::from_row(&d_h_hat));
            let d_dec_in = d_dec_in.row(0);
            let d_z = d_dec_in[..z_dim].to_vec();
            let mut d_h_u = d_dec_in[z_dim..].to_vec();

            // KL gradients
            let mut d_mu_q = vec![0.0; z_dim];
            let mut d_lv_q = vec![0.0; z_dim];
            let mut d_mu_p = vec![0.0; z_dim];
            let mut d_lv_p = vec![0.0; z_dim];
            for i in 0..z_dim {
                let diff = mu_q[i] - mu_p[i];
                let e_iv_p = (-lv_p[i]).exp();
                let ratio = (lv_q[i] - lv_p[i]).exp();
                d_mu_q[i] = c * diff * e_iv_p;
                d_mu_p[i] = -c * diff * e_iv_p;
                d_lv_q[i] = c * 0.5 * (ratio - 1.0);
                d_lv_p[i] = c * 0.5 * (1.0 - ratio - diff * diff * e_iv_p);
            }
            // reparameterization: z = mu + exp(lv/2) * n
            for i in 0..z_dim {
                d_mu_q[i] += d_z[i];
                d_lv_q[i] += d_z[i] * noise[i] * (0.5 * lv_q[i]).exp() * 0.5;
            }

            // posterior MLPs
            let d_in_mu = self.mlp_mu.backward(&mu_cache, &Tensor2::from_row(&d_mu_q));
            let d_in_lv = self
                .mlp_logvar
                .backward(&lv_cache, &Tensor2::from_row(&d_lv_q));
            let mut d_post_in = d_in_mu.row(0).to_vec();
            add_vec(&mut d_post_in, d_in_lv.row(0));
            add_vec(&mut d_h_u, &d_post_in[..2 * h_dim]);
            let d_h_v = d_post_in[2 * h_dim..].to_vec();

            // prior MLP
            let mut d_prior_out = d_mu_p;
            d_prior_out.extend_from_slice(&d_lv_p);
            let d_h_u_prior = self
                .mlp_prior
                .backward(&prior_cache, &Tensor2::from_row(&d_prior_out));
            add_vec(&mut d_h_u, d_h_u_prior.row(0));

            // back into the encoders
            self.gru_text.backward(&ctx_cache, &d_h_u[..h_dim]);
            self.gru_root.backward(&root_cache, &d_h_u[h_dim..]);
            self.gru_text.backward(&v_cache, &d_h_v);
        }
        parts.total = reward * (parts.recon_sum + parts.kl_sum);
        Ok(parts)
    }

    /// Teacher-forced token-decoder loss: predict the response tokens (then
    /// the end marker) from the encoded response embedding. Trains the
    /// decoder and, through the initial hidden state, the text encoder.
    /// Returns the sum over pairs of per-token mean cross-entropies.
    pub fn decoder_loss(&mut self, pairs: &[CrgPair], backprop: bool) -> Result<f64> {
        let mut total = 0.0;
        for pair in pairs {
            let (h_v, v_cache) = self.gru_text.encode(&pair.response)?;
            let mut inputs = vec![self.sos()];
            inputs.extend_from_slice(&pair.response);
            let mut targets = pair.response.clone();
            targets.push(self.eos());

            let mut h = h_v.clone();
            let mut steps = Vec::with_capacity(inputs.len());
            let mut step_probs = Vec::with_capacity(inputs.len());
            for &tok in &inputs {
                let (logits, h_next, cache) = self.token_decoder.step(&h, tok)?;
                step_probs.push(softmax(&logits));
                steps.push(cache);
                h = h_next;
            }
            let denom = targets.len() as f64;
            for (probs, &target) in step_probs.iter().zip(&targets) {
                total += cross_entropy(probs, target)? / denom;
            }
            if !backprop {
                continue;
            }
            let mut dh = vec![0.0; self.hidden()];
            for i in (0..steps.len()).rev() {
                let d_logits = softmax_ce_grad(&step_probs[i], targets[i], 1.0 / denom);
                dh = self
                    .token_decoder
                    .backward_step(&steps[i], &d_logits, &dh);
            }
            self.gru_text.backward(&v_cache, &dh);
        }
        Ok(total)
    }
}

impl Parameterized for CrgModel {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param)) {
        self.gru_text.visit(f);
        self.gru_root.visit(f);
        self.mlp_mu.visit(f);
        self.mlp_logvar.visit(f);
        self.mlp_decode.visit(f);
        self.mlp_prior.visit(f);
        self.token_decoder.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.gru_text.visit_mut(f);
        self.gru_root.visit_mut(f);
        self.mlp_mu.visit_mut(f);
        self.mlp_logvar.visit_mut(f);
        self.mlp_decode.visit_mut(f);
        self.mlp_prior.visit_mut(f);
        self.token_decoder.visit_mut(f);
    }
}

/// Reparameterized draw `z = mu + exp(logvar/2) * noise`.
pub fn sample_latent(g: &LatentGaussian, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != g.dim() {
        return Err(KpgError::Input(format!(
            "sample_latent: noise width {} != latent width {}",
            noise.len(),
            g.dim()
        )));
    }
    Ok(g
        .mu
        .iter()
        .zip(&g.logvar)
        .zip(noise)
        .map(|((m, lv), n)| m + (0.5 * lv).exp() * n)
        .collect())
}

/// Closed-form KL between diagonal Gaussians, summed over dimensions and
/// evaluated in a non-negative-by-construction form (`exp_m1(x) - x >= 0`);
/// the clamp only guards against the last ulp of rounding.
pub fn kl_divergence(mu_q: &[f64], lv_q: &[f64], mu_p: &[f64], lv_p: &[f64]) -> f64 {
    let mut kl = 0.0;
    for i in 0..mu_q.len() {
        let x = lv_q[i] - lv_p[i];
        let diff = mu_q[i] - mu_p[i];
        kl += 0.5 * ((x.exp_m1() - x).max(0.0) + diff * diff * (-lv_p[i]).exp());
    }
    kl
}

/// Exponential margin reward for reconstruction quality:
/// `exp(-(f(g')[y] - f(g)[y]))`, below 1 exactly when the reconstructed
/// features score higher on the true class.
pub fn reward_crg(
    scorer: &dyn GraphScorer,
    original: &GraphView,
    reconstructed: &GraphView,
    label: usize,
) -> Result<f64> {
    let s_orig = scorer.true_class_score(original, label)?;
    let s_rec = scorer.true_class_score(reconstructed, label)?;
    Ok((-(s_rec - s_orig)).exp())
}

/// Standard normal sample via Box-Muller.
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Gathers `(context, root, response)` pairs from a key graph's edges.
pub fn harvest_pairs(state: &KeyGraphState, graph: &CandidateGraph) -> Vec<CrgPair> {
    let root = graph.tokens(0).to_vec();
    state
        .edges()
        .iter()
        .map(|&(u, v)| CrgPair {
            context: graph.tokens(u).to_vec(),
            root: root.clone(),
            response: graph.tokens(v).to_vec(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_model(seed: u64) -> CrgModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CrgModel::new(6, 4, 3, &mut rng)
    }

    #[test]
    fn empty_texts_encode_to_zero() {
        let m = toy_model(0);
        let (h_u, h_v) = m.encode_pair(&[], &[], &[]).unwrap();
        assert_eq!(h_u, vec![0.0; 8]);
        assert_eq!(h_v, vec![0.0; 4]);
    }

    #[test]
    fn zero_weight_posterior_is_standard_normal() {
        let mut m = toy_model(0);
        m.mlp_mu.visit_mut(&mut |_, p| p.value.fill(0.0));
        m.mlp_logvar.visit_mut(&mut |_, p| p.value.fill(0.0));
        let g = m.cvae_posterior(&[0.4; 8], &[0.1; 4]).unwrap();
        assert_eq!(g.mu, vec![0.0; 3]);
        assert_eq!(g.logvar, vec![0.0; 3]);
    }

    #[test]
    fn zero_weight_prior_is_standard_normal() {
        let mut m = toy_model(0);
        m.mlp_prior.visit_mut(&mut |_, p| p.value.fill(0.0));
        let g = m.cvae_prior(&[0.4; 8]).unwrap();
        assert_eq!(g.mu, vec![0.0; 3]);
        assert_eq!(g.logvar, vec![0.0; 3]);
    }

    #[test]
    fn identical_contexts_share_priors() {
        let m = toy_model(7);
        let (h_u, _) = m.encode_pair(&[1, 2], &[3], &[4]).unwrap();
        let (h_u2, _) = m.encode_pair(&[1, 2], &[3], &[5]).unwrap();
        assert_eq!(h_u, h_u2);
        assert_eq!(m.cvae_prior(&h_u).unwrap(), m.cvae_prior(&h_u2).unwrap());
    }

    #[test]
    fn reparameterization_identities() {
        let g = LatentGaussian {
            mu: vec![1.0, -2.0],
            logvar: vec![0.3, -0.7],
        };
        assert_eq!(sample_latent(&g, &[0.0, 0.0]).unwrap(), g.mu);
        let std = LatentGaussian {
            mu: vec![0.0, 0.0],
            logvar: vec![0.0, 0.0],
        };
        assert_eq!(sample_latent(&std, &[0.5, -0.25]).unwrap(), vec![0.5, -0.25]);
    }

    #[test]
    fn zero_weight_decoder_embedding_is_zero() {
        let mut m = toy_model(0);
        m.mlp_decode.visit_mut(&mut |_, p| p.value.fill(0.0));
        let e = m.decode_embedding(&[0.1, 0.2, 0.3], &[0.4; 8]).unwrap();
        assert_eq!(e, vec![0.0; 4]);
    }

    #[test]
    fn kl_closed_form_examples() {
        // identical Gaussians
        assert_eq!(kl_divergence(&[0.3], &[0.1], &[0.3], &[0.1]), 0.0);
        // q = N(1,1), p = N(0,1): 0.5 per dimension
        assert!((kl_divergence(&[1.0], &[0.0], &[0.0], &[0.0]) - 0.5).abs() < 1e-12);
        assert!((kl_divergence(&[1.0, 1.0], &[0.0; 2], &[0.0; 2], &[0.0; 2]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kl_never_negative_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let d = 4;
            let r = |rng: &mut ChaCha8Rng| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect::<Vec<f64>>();
            let kl = kl_divergence(&r(&mut rng), &r(&mut rng), &r(&mut rng), &r(&mut rng));
            assert!(kl >= 0.0);
        }
    }

    #[test]
    fn perfect_reconstruction_and_matched_gaussians_zero_loss() {
        let mut m = toy_model(3);
        // zero decoder output against zero response embedding, matched q/p
        m.visit_mut(&mut |_, p| p.value.fill(0.0));
        let pairs = vec![CrgPair {
            context: vec![],
            root: vec![],
            response: vec![],
        }];
        let noises = vec![vec![0.0; 3]];
        let parts = m.loss_crg(&pairs, &noises, 5.0).unwrap();
        assert_eq!(parts.total, 0.0);
    }

    struct FixedScorer(f64);
    impl GraphScorer for FixedScorer {
        fn class_probs(&self, g: &GraphView) -> crate::error::Result<Vec<f64>> {
            // score depends on the first feature entry so original and
            // reconstructed views can differ
            let s = (self.0 + g.x.get(0, 0)).clamp(0.0, 1.0);
            Ok(vec![s, 1.0 - s])
        }
    }

    #[test]
    fn reward_crg_tabulated() {
        let a = GraphView::new(Tensor2::from_row(&[0.0, 0.0]), vec![]);
        let b = GraphView::new(Tensor2::from_row(&[0.2, 0.0]), vec![]);
        // f(a)[0] = 0.7, f(b)[0] = 0.9
        let r = reward_crg(&FixedScorer(0.7), &a, &b, 0).unwrap();
        assert!((r - (-0.2f64).exp()).abs() < 1e-12);
        assert!((r - 0.818731).abs() < 1e-6);
        // equal scores
        let r1 = reward_crg(&FixedScorer(0.7), &a, &a, 0).unwrap();
        assert!((r1 - 1.0).abs() < 1e-12);
        // regression: f(g') = 0.5, f(g) = 0.8
        let c = GraphView::new(Tensor2::from_row(&[-0.3, 0.0]), vec![]);
        let r2 = reward_crg(&FixedScorer(0.8), &a, &c, 0).unwrap();
        assert!((r2 - 0.3f64.exp()).abs() < 1e-12);
        assert!((r2 - 1.349859).abs() < 1e-6);
    }

    #[test]
    fn empty_batch_is_zero_loss() {
        let mut m = toy_model(1);
        let parts = m.loss_crg(&[], &[], 2.0).unwrap();
        assert_eq!(parts.total, 0.0);
        assert!(parts.kl_per_pair.is_empty());
    }
}
