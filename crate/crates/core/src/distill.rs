//! Tempered softmax, coupled and decoupled distillation losses, and their
//! gradients with respect to the student logits.
//!
//! With `b = [p_t, 1 - p_t]` the target/rest split and `p~` the softmax over
//! non-target logits only, the coupled loss decomposes as
//!
//! ```text
//! KL(p_T || p_S) = KL(b_T || b_S) + (1 - p_t_T) * KL(p~_T || p~_S)
//!                =      TCKD      + (1 - p_t_T) *       NCKD
//! ```
//!
//! and the decoupled objective reweights the two parts independently:
//! `alpha * TCKD + beta * NCKD`. Every divergence is computed on logits
//! divided by the temperature and multiplied by `temperature^2`.
//!
//! Probabilities entering a logarithm are floored at `1e-12`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

fn log_floor() -> f64 {
    PROB_FLOOR.ln()
}

/// Weights and schedule of the distillation objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DkdConfig {
    /// Weight of the target-class term.
    pub alpha: f64,
    /// Weight of the non-target term.
    pub beta: f64,
    /// Mix between hard-label loss and distillation, in `[0, 1]`.
    pub lambda: f64,
    /// Epochs over which the distillation weight ramps linearly to `lambda`.
    pub warmup_epochs: usize,
    pub temperature: f64,
}

impl Default for DkdConfig {
    fn default() -> Self {
        Self {
            alpha: 5.0,
            beta: 1.0,
            lambda: 0.2,
            warmup_epochs: 5,
            temperature: 4.0,
        }
    }
}

impl DkdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be >= 0, got {}", self.beta));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if self.warmup_epochs == 0 {
            return bad("warm-up length must be at least one epoch".into());
        }
        check_temperature(self.temperature)
    }

    /// `min(epoch / warmup, 1)`.
    pub fn warmup_factor(&self, epoch: usize) -> f64 {
        (epoch as f64 / self.warmup_epochs as f64).min(1.0)
    }

    /// Effective weight on the distillation term at `epoch`.
    pub fn dkd_weight(&self, epoch: usize) -> f64 {
        self.lambda * self.warmup_factor(epoch)
    }
}

/// Target / non-target view of a tempered softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbSplit {
    pub p_target: f64,
    pub p_nontarget: f64,
    /// Softmax over the non-target logits, in class order with the target
    /// removed.
    pub tilde_p: Vec<f64>,
}

impl ProbSplit {
    /// Rebuilds the full class distribution.
    pub fn reconstruct(&self, target: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.tilde_p.len() + 1);
        out.extend(self.tilde_p[..target].iter().map(|p| p * self.p_nontarget));
        out.push(self.p_target);
        out.extend(self.tilde_p[target..].iter().map(|p| p * self.p_nontarget));
        out
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "temperature must be > 0, got {t}"
        )))
    }
}

fn check_logits(logits: &[f64]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::dim("logits", 1, 0));
    }
    if let Some(v) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::InputDomain(format!("logit {v} is not finite")));
    }
    Ok(())
}

fn check_pair(teacher: &[f64], student: &[f64], target: usize) -> Result<()> {
    check_logits(teacher)?;
    check_logits(student)?;
    if teacher.len() != student.len() {
        return Err(Error::dim("student logits", teacher.len(), student.len()));
    }
    if teacher.len() < 2 {
        return Err(Error::InvalidConfig(
            "distillation needs at least two classes".into(),
        ));
    }
    if target >= teacher.len() {
        return Err(Error::InvalidTarget {
            target,
            classes: teacher.len(),
        });
    }
    Ok(())
}

fn log_sum_exp<'a>(values: impl Iterator<Item = &'a f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Softmax of `logits / temperature`.
pub fn softmax(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    check_logits(logits)?;
    Ok(softmax_unchecked(logits, temperature))
}

fn softmax_unchecked(logits: &[f64], temperature: f64) -> Vec<f64> {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e: Vec<f64> = logits
        .iter()
        .map(|v| ((v - m) / temperature).exp())
        .collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Log-space quantities of one tempered distribution, split around `target`.
struct LogSplit {
    /// Unfloored log of the full softmax.
    log_p: Vec<f64>,
    log_pt: f64,
    log_pnt: f64,
    /// Unfloored log of the non-target softmax, indexed by class (the target
    /// slot is unused).
    log_tilde: Vec<f64>,
}

impl LogSplit {
    fn new(logits: &[f64], target: usize, temperature: f64) -> Self {
        let z: Vec<f64> = logits.iter().map(|v| v / temperature).collect();
        let lse_all = log_sum_exp(z.iter());
        let others = z
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != target)
            .map(|(_, v)| v);
        let lse_rest = log_sum_exp(others);
        let log_p: Vec<f64> = z.iter().map(|v| v - lse_all).collect();
        let log_tilde: Vec<f64> = z.iter().map(|v| v - lse_rest).collect();
        Self {
            log_pt: log_p[target],
            log_pnt: lse_rest - lse_all,
            log_p,
            log_tilde,
        }
    }
}

/// Splits the tempered softmax into target, rest, and renormalized non-target
/// probabilities.
pub fn split_probs(logits: &[f64], target: usize, temperature: f64) -> Result<ProbSplit> {
    check_temperature(temperature)?;
    check_logits(logits)?;
    if logits.len() < 2 {
        return Err(Error::InvalidConfig(
            "split needs at least two classes".into(),
        ));
    }
    if target >= logits.len() {
        return Err(Error::InvalidTarget {
            target,
            classes: logits.len(),
        });
    }
    let rest: Vec<f64> = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target)
        .map(|(_, v)| *v)
        .collect();
    let s = LogSplit::new(logits, target, temperature);
    Ok(ProbSplit {
        p_target: s.log_pt.exp(),
        p_nontarget: s.log_pnt.exp(),
        tilde_p: softmax_unchecked(&rest, temperature),
    })
}

/// `sum p_i (log p_i - log q_i)` with both logs floored.
fn kl_from_logs<'a>(log_p: impl Iterator<Item = (&'a f64, &'a f64)>) -> f64 {
    let lf = log_floor();
    log_p
        .map(|(lp, lq)| lp.exp() * (lp.max(lf) - lq.max(lf)))
        .sum()
}

/// Full-distribution KL divergence between tempered teacher and student
/// softmaxes, times `temperature^2`. `target` only selects which class the
/// sample belongs to and is validated for consistency with the other losses.
pub fn kd_coupled(
    teacher: &[f64],
    student: &[f64],
    target: usize,
    temperature: f64,
) -> Result<f64> {
    check_temperature(temperature)?;
    check_pair(teacher, student, target)?;
    let t = LogSplit::new(teacher, target, temperature);
    let s = LogSplit::new(student, target, temperature);
    Ok(temperature * temperature * kl_from_logs(t.log_p.iter().zip(&s.log_p)))
}

/// Binary KL between `[p_t, p_rest]` of teacher and student.
pub fn tckd(teacher: &[f64], student: &[f64], target: usize, temperature: f64) -> Result<f64> {
    check_temperature(temperature)?;
    check_pair(teacher, student, target)?;
    let t = LogSplit::new(teacher, target, temperature);
    let s = LogSplit::new(student, target, temperature);
    Ok(tckd_from(&t, &s, temperature))
}

fn tckd_from(t: &LogSplit, s: &LogSplit, temperature: f64) -> f64 {
    let tl = [t.log_pt, t.log_pnt];
    let sl = [s.log_pt, s.log_pnt];
    temperature * temperature * kl_from_logs(tl.iter().zip(&sl))
}

/// KL between the non-target renormalized distributions. Exactly zero for
/// two classes.
pub fn nckd(teacher: &[f64], student: &[f64], target: usize, temperature: f64) -> Result<f64> {
    check_temperature(temperature)?;
    check_pair(teacher, student, target)?;
    if teacher.len() == 2 {
        return Ok(0.0);
    }
    let t = LogSplit::new(teacher, target, temperature);
    let s = LogSplit::new(student, target, temperature);
    Ok(nckd_from(&t, &s, target, temperature))
}

fn nckd_from(t: &LogSplit, s: &LogSplit, target: usize, temperature: f64) -> f64 {
    if t.log_tilde.len() == 2 {
        return 0.0;
    }
    let pairs = t
        .log_tilde
        .iter()
        .zip(&s.log_tilde)
        .enumerate()
        .filter(|(i, _)| *i != target)
        .map(|(_, pair)| pair);
    temperature * temperature * kl_from_logs(pairs)
}

/// `alpha * TCKD + beta * NCKD`.
pub fn dkd_loss(teacher: &[f64], student: &[f64], target: usize, cfg: &DkdConfig) -> Result<f64> {
    check_temperature(cfg.temperature)?;
    check_pair(teacher, student, target)?;
    let t = LogSplit::new(teacher, target, cfg.temperature);
    let s = LogSplit::new(student, target, cfg.temperature);
    let tc = tckd_from(&t, &s, cfg.temperature);
    let nc = nckd_from(&t, &s, target, cfg.temperature);
    Ok(cfg.alpha * tc + cfg.beta * nc)
}

/// `(1 - lambda) * hard + lambda * min(epoch / warmup, 1) * dkd`.
pub fn total_loss(hard_ce: f64, dkd: f64, epoch: usize, cfg: &DkdConfig) -> f64 {
    (1.0 - cfg.lambda) * hard_ce + cfg.dkd_weight(epoch) * dkd
}

/// Cross-entropy of untempered logits against an integer label.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<f64> {
    check_logits(logits)?;
    if target >= logits.len() {
        return Err(Error::InvalidTarget {
            target,
            classes: logits.len(),
        });
    }
    let lse = log_sum_exp(logits.iter());
    Ok(lse - logits[target])
}

/// Gradient of [`cross_entropy`]: `softmax(logits) - onehot(target)`.
pub fn cross_entropy_grad(logits: &[f64], target: usize) -> Result<Vec<f64>> {
    cross_entropy(logits, target)?;
    let mut g = softmax_unchecked(logits, 1.0);
    g[target] -= 1.0;
    Ok(g)
}

/// Gradient of [`kd_coupled`] with respect to the student logits.
pub fn kd_coupled_grad(
    teacher: &[f64],
    student: &[f64],
    target: usize,
    temperature: f64,
) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    check_pair(teacher, student, target)?;
    let p = softmax_unchecked(teacher, temperature);
    let q = softmax_unchecked(student, temperature);
    Ok(q.iter()
        .zip(&p)
        .map(|(q, p)| temperature * (q - p))
        .collect())
}

fn tckd_grad_from(t: &LogSplit, s: &LogSplit, target: usize, temperature: f64) -> Vec<f64> {
    let pt = t.log_pt.exp();
    let qt = s.log_pt.exp();
    s.log_tilde
        .iter()
        .enumerate()
        .map(|(i, lq)| {
            if i == target {
                temperature * (qt - pt)
            } else {
                temperature * (pt - qt) * lq.exp()
            }
        })
        .collect()
}

fn nckd_grad_from(t: &LogSplit, s: &LogSplit, target: usize, temperature: f64) -> Vec<f64> {
    if t.log_tilde.len() == 2 {
        return vec![0.0; 2];
    }
    t.log_tilde
        .iter()
        .zip(&s.log_tilde)
        .enumerate()
        .map(|(i, (lp, lq))| {
            if i == target {
                0.0
            } else {
                temperature * (lq.exp() - lp.exp())
            }
        })
        .collect()
}

/// Gradient of [`tckd`] with respect to the student logits.
pub fn tckd_grad(
    teacher: &[f64],
    student: &[f64],
    target: usize,
    temperature: f64,
) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    check_pair(teacher, student, target)?;
    let t = LogSplit::new(teacher, target, temperature);
    let s = LogSplit::new(student, target, temperature);
    Ok(tckd_grad_from(&t, &s, target, temperature))
}

/// Gradient of [`nckd`] with respect to the student logits.
pub fn nckd_grad(
    teacher: &[f64],
    student: &[f64],
    target: usize,
    temperature: f64,
) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    check_pair(teacher, student, target)?;
    let t = LogSplit::new(teacher, target, temperature);
    let s = LogSplit::new(student, target, temperature);
    Ok(nckd_grad_from(&t, &s, target, temperature))
}

/// Gradient of [`dkd_loss`] with respect to the student logits.
pub fn dkd_grad(
    teacher: &[f64],
    student: &[f64],
    target: usize,
    cfg: &DkdConfig,
) -> Result<Vec<f64>> {
    check_temperature(cfg.temperature)?;
    check_pair(teacher, student, target)?;
    let t = LogSplit::new(teacher, target, cfg.temperature);
    let s = LogSplit::new(student, target, cfg.temperature);
    let tc = tckd_grad_from(&t, &s, target, cfg.temperature);
    let nc = nckd_grad_from(&t, &s, target, cfg.temperature);
    Ok(tc
        .iter()
        .zip(&nc)
        .map(|(a, b)| cfg.alpha * a + cfg.beta * b)
        .collect())
}

/// Per-sample value and gradient of the student objective.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentLoss {
    pub hard: f64,
    pub dkd: f64,
    pub total: f64,
    /// Gradient of `total` with respect to the student logits.
    pub grad: Vec<f64>,
}

/// The warm-up scheduled objective
/// `(1 - lambda) * CE(student, label) + lambda * min(epoch / w, 1) * DKD`
/// with its gradient.
///
/// `class_weight` scales the hard-label term for this sample (1.0 when
/// unweighted). The target class for the distillation split is the true
/// label.
pub fn student_objective(
    teacher: &[f64],
    student: &[f64],
    label: usize,
    epoch: usize,
    cfg: &DkdConfig,
    class_weight: f64,
) -> Result<StudentLoss> {
    let hard = class_weight * cross_entropy(student, label)?;
    let dkd = dkd_loss(teacher, student, label, cfg)?;
    let hard_g = cross_entropy_grad(student, label)?;
    let dkd_g = dkd_grad(teacher, student, label, cfg)?;
    let w_hard = (1.0 - cfg.lambda) * class_weight;
    let w_dkd = cfg.dkd_weight(epoch);
    let grad = hard_g
        .iter()
        .zip(&dkd_g)
        .map(|(h, d)| w_hard * h + w_dkd * d)
        .collect();
    Ok(StudentLoss {
        hard,
        dkd,
        total: total_loss(hard, dkd, epoch, cfg),
        grad,
    })
}

/// Gradient of [`student_objective`]'s total with respect to the student
/// logits, unweighted classes.
pub fn distill_grad(
    teacher: &[f64],
    student: &[f64],
    label: usize,
    epoch: usize,
    cfg: &DkdConfig,
) -> Result<Vec<f64>> {
    Ok(student_objective(teacher, student, label, epoch, cfg, 1.0)?.grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_examples() {
        let u = softmax(&[2.0, 2.0, 2.0], 3.0).unwrap();
        assert!(u.iter().all(|p| close(*p, 1.0 / 3.0, 1e-15)));
        let hot = softmax(&[1.0, 5.0], 1e6).unwrap();
        assert!(hot.iter().all(|p| close(*p, 0.5, 1e-5)));
        let p = softmax(&[0.0, 3f64.ln()], 1.0).unwrap();
        assert!(close(p[0], 0.25, 1e-15) && close(p[1], 0.75, 1e-15));
        assert!(softmax(&[1.0], 0.0).is_err());
        assert!(softmax(&[1.0], -1.0).is_err());
    }

    #[test]
    fn split_examples() {
        let s = split_probs(&[0.4, 0.4], 1, 2.0).unwrap();
        assert!(close(s.p_target, 0.5, 1e-15));
        assert_eq!(s.tilde_p, vec![1.0]);
        let s = split_probs(&[0.0, 0.0, 0.0], 0, 1.0).unwrap();
        assert!(close(s.p_target, 1.0 / 3.0, 1e-15));
        assert!(close(s.tilde_p[0], 0.5, 1e-15) && close(s.tilde_p[1], 0.5, 1e-15));
        assert!(matches!(
            split_probs(&[0.0, 0.0], 2, 1.0),
            Err(Error::InvalidTarget { .. })
        ));
    }

    #[test]
    fn tckd_closed_form() {
        // Logits chosen so b_T = (0.8, 0.2) and b_S = (0.6, 0.4) at T = 1.
        let teacher = [4f64.ln(), 0.0];
        let student = [1.5f64.ln(), 0.0];
        let got = tckd(&teacher, &student, 0, 1.0).unwrap();
        let expect = 0.8 * (0.8f64 / 0.6).ln() + 0.2 * (0.2f64 / 0.4).ln();
        assert!(close(got, expect, 1e-14), "{got} vs {expect}");
    }

    #[test]
    fn tckd_ignores_non_target_spread() {
        // Both put 0.9 on class 0 but split the rest differently.
        let teacher = [9f64.ln(), 0.5f64.ln(), 0.5f64.ln()];
        let student = [9f64.ln(), 0.9f64.ln(), 0.1f64.ln()];
        assert!(tckd(&teacher, &student, 0, 1.0).unwrap().abs() < 1e-15);
        assert!(nckd(&teacher, &student, 0, 1.0).unwrap() > 0.0);
    }

    #[test]
    fn binary_nckd_is_zero() {
        assert_eq!(nckd(&[3.0, -1.0], &[-2.0, 7.0], 1, 4.0).unwrap(), 0.0);
        let cfg = DkdConfig {
            alpha: 5.0,
            beta: 1.0,
            ..DkdConfig::default()
        };
        let t = [0.3, -1.2];
        let s = [1.1, 0.4];
        assert_eq!(
            dkd_loss(&t, &s, 0, &cfg).unwrap(),
            5.0 * tckd(&t, &s, 0, 4.0).unwrap()
        );
    }

    #[test]
    fn identical_logits_give_zero() {
        let l = [0.2, -1.0, 3.0, 0.5];
        assert_eq!(kd_coupled(&l, &l, 2, 2.0).unwrap(), 0.0);
        assert_eq!(tckd(&l, &l, 2, 2.0).unwrap(), 0.0);
        assert_eq!(nckd(&l, &l, 2, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_weights() {
        let cfg = DkdConfig {
            alpha: 0.0,
            beta: 0.0,
            ..DkdConfig::default()
        };
        let t = [0.2, -1.0, 3.0];
        let s = [1.0, 2.0, -0.5];
        assert_eq!(dkd_loss(&t, &s, 1, &cfg).unwrap(), 0.0);
        assert!(dkd_grad(&t, &s, 1, &cfg).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn total_loss_schedule() {
        let cfg = DkdConfig {
            lambda: 0.2,
            warmup_epochs: 5,
            ..DkdConfig::default()
        };
        assert_eq!(total_loss(1.3, 9.0, 0, &cfg), 0.8 * 1.3);
        assert!(close(total_loss(1.0, 0.5, 5, &cfg), 0.8 + 0.2 * 0.5, 1e-15));
        assert!(close(total_loss(1.0, 0.5, 2, &cfg), 0.84, 1e-15));
        assert_eq!(cfg.warmup_factor(50), 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(DkdConfig::default().validate().is_ok());
        for bad in [
            DkdConfig {
                alpha: -1.0,
                ..DkdConfig::default()
            },
            DkdConfig {
                lambda: 1.5,
                ..DkdConfig::default()
            },
            DkdConfig {
                warmup_epochs: 0,
                ..DkdConfig::default()
            },
            DkdConfig {
                temperature: 0.0,
                ..DkdConfig::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn cross_entropy_values() {
        let ce = cross_entropy(&[0.0, 3f64.ln()], 1).unwrap();
        assert!(close(ce, -(0.75f64).ln(), 1e-15));
        let g = cross_entropy_grad(&[0.0, 3f64.ln()], 1).unwrap();
        assert!(close(g[0], 0.25, 1e-15) && close(g[1], -0.25, 1e-15));
        assert!(cross_entropy(&[800.0, -800.0], 1).unwrap().is_finite());
    }
}
