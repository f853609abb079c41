use rand::Rng;

use super::proposal::Proposal;
use super::ChainOutput;
use crate::corpus::WordId;
use crate::error::{Error, Result};
use crate::features::FeatureBuilder;
use crate::loglinear::{log_sum_exp, LogLinearModel};

/// Draw an index with probability proportional to `weights`. `None` if all are zero.
fn sample_linear<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return Some(i);
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0)
}

/// Draw an index with probability proportional to `exp(logits)`.
fn sample_logits<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> Option<usize> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    sample_linear(&w, rng)
}

fn exp_shifted(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    scores.iter().map(|s| (s - max).exp()).collect()
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Argument("need at least one sample".into()));
    }
    Ok(())
}

/// Gibbs chain over the latent target bigram of one observed source bigram.
///
/// The chain starts from a proposal draw and alternately resamples `e1` from
/// `p(e1 | e2, f1 f2) ∝ p(e1 e2) exp(w . Phi)` and `e2` symmetrically. Every
/// single-coordinate update yields one recorded state.
pub fn gibbs_forced<R: Rng + ?Sized>(
    m: &LogLinearModel,
    prop: &Proposal,
    f: (WordId, WordId),
    n: usize,
    rng: &mut R,
) -> Result<ChainOutput<(WordId, WordId)>> {
    check_n(n)?;
    let v = m.target_size();
    let mut s1 = vec![0.0; v];
    let mut s2 = vec![0.0; v];
    m.weights.fill_unit_scores(&m.space, f.0, &mut s1);
    m.weights.fill_unit_scores(&m.space, f.1, &mut s2);
    let x1 = exp_shifted(&s1);
    let x2 = exp_shifted(&s2);

    let mut state = (prop.sample(f.0, rng), prop.sample(f.1, rng));
    let mut lm_slice = vec![0.0; v];
    let mut weights = vec![0.0; v];
    let mut samples = Vec::with_capacity(n);
    let mut phi = FeatureBuilder::with_capacity(2 * n);
    let unit = 1.0 / n as f64;
    for step in 0..n {
        if step % 2 == 0 {
            m.lm.fill_column(state.1, &mut lm_slice);
            for e in 0..v {
                weights[e] = lm_slice[e] * x1[e];
            }
            if let Some(e1) = sample_linear(&weights, rng) {
                state.0 = e1;
            }
        } else {
            m.lm.fill_row(state.0, &mut lm_slice);
            for e in 0..v {
                weights[e] = lm_slice[e] * x2[e];
            }
            if let Some(e2) = sample_linear(&weights, rng) {
                state.1 = e2;
            }
        }
        samples.push(state);
        phi.add_bigram(&m.space, f, state, unit);
    }
    Ok(ChainOutput {
        samples,
        mean_phi: phi.finish(),
        acceptance_rate: None,
    })
}

/// Lazily built columns `exp(unit_score(f, e) - shift)` over all source
/// words `f`, one per target word `e` that the chain touches.
struct ScoreColumns {
    sparse: Vec<Vec<(WordId, f64)>>,
    shift: f64,
    default: f64,
    cols: Vec<Option<Vec<f64>>>,
    vf: usize,
}

impl ScoreColumns {
    fn new(m: &LogLinearModel) -> Self {
        let mut sparse = vec![Vec::new(); m.target_size()];
        for (&(f, e), &w) in &m.weights.translation {
            let ortho = if m.space.is_ortho(f, e) { m.weights.ortho_weight } else { 0.0 };
            sparse[e].push((f, w + ortho));
        }
        for (e, list) in sparse.iter_mut().enumerate() {
            for &f in m.space.ortho_sources(e) {
                if !m.weights.contains(f, e) {
                    list.push((f, m.weights.ortho_weight));
                }
            }
        }
        let shift = sparse.iter().flatten().map(|p| p.1).fold(0.0, f64::max);
        ScoreColumns {
            cols: vec![None; sparse.len()],
            sparse,
            shift,
            default: (-shift).exp(),
            vf: m.source_size(),
        }
    }

    fn column(&mut self, e: WordId) -> &[f64] {
        let (sparse, default, shift, vf) = (&self.sparse[e], self.default, self.shift, self.vf);
        self.cols[e].get_or_insert_with(|| {
            let mut c = vec![default; vf];
            for &(f, s) in sparse {
                c[f] = (s - shift).exp();
            }
            c
        })
    }
}

/// One sampled joint configuration of the full-expectation chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointSample {
    pub source: (WordId, WordId),
    pub target: (WordId, WordId),
}

/// Gibbs chain over source bigrams drawn from the model, approximating the
/// collapsed conditionals with a fresh set `S` of `inner` LM samples:
/// `p(f1 | f2) ∝ sum_{e1 e2 ∈ S} exp(w . Phi(f1 f2, e1 e2))`.
///
/// The latent target bigram paired with each retained source bigram is drawn
/// from the same set `S`, weighted by `exp(w . Phi)`, which targets
/// `p(e1 e2 | f1 f2)` under the same approximation.
pub fn gibbs_full<R: Rng + ?Sized>(
    m: &LogLinearModel,
    n: usize,
    inner: usize,
    rng: &mut R,
) -> Result<ChainOutput<JointSample>> {
    check_n(n)?;
    check_n(inner)?;
    let vf = m.source_size();
    let mut source = (rng.gen_range(0..vf), rng.gen_range(0..vf));
    let mut samples = Vec::with_capacity(n);
    let mut phi = FeatureBuilder::with_capacity(2 * n);
    let unit = 1.0 / n as f64;

    let mut set: Vec<(WordId, WordId)> = Vec::with_capacity(inner);
    let mut fixed: Vec<(WordId, f64)> = Vec::with_capacity(inner);
    let mut groups: Vec<(WordId, f64)> = Vec::new();
    let mut logits = vec![0.0; vf];
    let mut acc = vec![0.0; vf];
    let mut columns = ScoreColumns::new(m);
    let mut buf = Vec::new();
    for step in 0..n {
        // position 0 resamples f1 with f2 fixed, position 1 the other way round
        let pos = step % 2;
        set.clear();
        set.extend((0..inner).map(|_| m.lm.sample_bigram(rng)));
        let kept = if pos == 0 { source.1 } else { source.0 };
        fixed.clear();
        for &(e1, e2) in &set {
            let (free_e, kept_e) = if pos == 0 { (e1, e2) } else { (e2, e1) };
            fixed.push((free_e, m.weights.unit_score(&m.space, kept, kept_e)));
        }
        // log-sum of the fixed-side scores, grouped by the free-side target word
        let mut order: Vec<usize> = (0..fixed.len()).collect();
        order.sort_by_key(|&j| fixed[j].0);
        groups.clear();
        let mut i = 0;
        while i < order.len() {
            let e = fixed[order[i]].0;
            buf.clear();
            while i < order.len() && fixed[order[i]].0 == e {
                buf.push(fixed[order[i]].1);
                i += 1;
            }
            groups.push((e, log_sum_exp(&buf)));
        }
        let gmax = groups.iter().map(|g| g.1).fold(f64::NEG_INFINITY, f64::max);
        acc.fill(0.0);
        for &(e, g) in &groups {
            let a = (g - gmax).exp();
            for (t, &x) in acc.iter_mut().zip(columns.column(e)) {
                *t += a * x;
            }
        }
        for (cand, logit) in logits.iter_mut().enumerate() {
            let t = acc[cand];
            *logit = if t > 0.0 && t.is_finite() {
                gmax + columns.shift + t.ln()
            } else {
                // underflow after shifting: sum directly in log space
                buf.clear();
                buf.extend(groups.iter().map(|&(e, g)| m.weights.unit_score(&m.space, cand, e) + g));
                log_sum_exp(&buf)
            };
        }
        let new = sample_logits(&logits, rng).expect("finite scores give positive mass");
        if pos == 0 {
            source.0 = new;
        } else {
            source.1 = new;
        }
        buf.clear();
        buf.extend(fixed.iter().map(|&(free_e, s)| m.weights.unit_score(&m.space, new, free_e) + s));
        let j = sample_logits(&buf, rng).expect("finite scores give positive mass");
        let sample = JointSample {
            source,
            target: set[j],
        };
        phi.add_bigram(&m.space, sample.source, sample.target, unit);
        samples.push(sample);
    }
    Ok(ChainOutput {
        samples,
        mean_phi: phi.finish(),
        acceptance_rate: None,
    })
}
