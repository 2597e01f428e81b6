//! Learning-rate schedules for large-batch training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleKind {
    Constant,
    WarmupThenConstant,
    WarmupThenStepDecay,
    InverseSqrt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    /// Small-batch rate γ.
    pub base_lr: f64,
    /// Linear-scaling factor; the warmup target is `scale_factor · γ`.
    #[serde(default = "one")]
    pub scale_factor: f64,
    /// Warmup length in epochs.
    #[serde(default)]
    pub warmup_epochs: f64,
    /// Fractions of the training horizon at which the rate is divided by `decay_factor`.
    #[serde(default = "default_milestones")]
    pub decay_milestones: Vec<f64>,
    #[serde(default = "default_decay_factor")]
    pub decay_factor: f64,
    #[serde(default = "default_inverse_sqrt_warmup")]
    pub warmup_steps_inverse_sqrt: usize,
}

fn one() -> f64 {
    1.0
}

fn default_milestones() -> Vec<f64> {
    vec![0.5, 0.75]
}

fn default_decay_factor() -> f64 {
    10.0
}

fn default_inverse_sqrt_warmup() -> usize {
    4000
}

/// Quantities a schedule needs from the cluster and the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleContext {
    pub workers_k: usize,
    pub local_batch_b: usize,
    pub sample_count: usize,
    pub total_steps: usize,
}

impl Schedule {
    pub fn constant(lr: f64) -> Self {
        Self {
            kind: ScheduleKind::Constant,
            base_lr: lr,
            scale_factor: 1.0,
            warmup_epochs: 0.0,
            decay_milestones: default_milestones(),
            decay_factor: default_decay_factor(),
            warmup_steps_inverse_sqrt: default_inverse_sqrt_warmup(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.base_lr) {
            return Err(Error::config("base_lr", "must be finite and >= 0"));
        }
        if !(self.scale_factor.is_finite() && self.scale_factor > 0.0) {
            return Err(Error::config("scale_factor", "must be finite and > 0"));
        }
        if !finite_nonneg(self.warmup_epochs) {
            return Err(Error::config("warmup_epochs", "must be finite and >= 0"));
        }
        if !(self.decay_factor.is_finite() && self.decay_factor > 0.0) {
            return Err(Error::config("decay_factor", "must be finite and > 0"));
        }
        let mut prev = 0.0;
        for &m in &self.decay_milestones {
            if !(m > prev && m < 1.0) {
                return Err(Error::config(
                    "decay_milestones",
                    "must be strictly increasing within (0, 1)",
                ));
            }
            prev = m;
        }
        if self.kind == ScheduleKind::InverseSqrt && self.warmup_steps_inverse_sqrt == 0 {
            return Err(Error::config("warmup_steps_inverse_sqrt", "must be at least 1"));
        }
        Ok(())
    }

    /// Target rate after warmup, `scale_factor · γ`.
    pub fn peak(&self) -> f64 {
        self.base_lr * self.scale_factor
    }

    /// Per-step warmup increment `(Kγ − γ) / (H_w · N / (K·B))`.
    pub fn warmup_increment(&self, ctx: &ScheduleContext) -> f64 {
        let steps_per_epoch = ctx.sample_count as f64 / (ctx.workers_k * ctx.local_batch_b) as f64;
        let warmup_steps = self.warmup_epochs * steps_per_epoch;
        if warmup_steps <= 0.0 {
            return f64::INFINITY;
        }
        (self.peak() - self.base_lr) / warmup_steps
    }

    fn warmed(&self, t: usize, ctx: &ScheduleContext) -> f64 {
        let inc = self.warmup_increment(ctx);
        if inc.is_infinite() {
            return self.peak();
        }
        (self.base_lr + t as f64 * inc).min(self.peak())
    }

    pub fn lr_at(&self, t: usize, ctx: &ScheduleContext) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.peak(),
            ScheduleKind::WarmupThenConstant => self.warmed(t, ctx),
            ScheduleKind::WarmupThenStepDecay => {
                let progress = t as f64 / ctx.total_steps.max(1) as f64;
                let passed = self
                    .decay_milestones
                    .iter()
                    .filter(|&&m| progress >= m)
                    .count();
                self.warmed(t, ctx) / self.decay_factor.powi(passed as i32)
            }
            ScheduleKind::InverseSqrt => {
                let s = (t + 1) as f64;
                let w = self.warmup_steps_inverse_sqrt as f64;
                self.peak() * (w / s).sqrt().min(s / w)
            }
        }
    }

    /// True when the rate does not depend on `t`.
    pub fn is_constant(&self) -> bool {
        match self.kind {
            ScheduleKind::Constant => true,
            ScheduleKind::WarmupThenConstant => self.scale_factor == 1.0 || self.warmup_epochs == 0.0,
            ScheduleKind::WarmupThenStepDecay | ScheduleKind::InverseSqrt => false,
        }
    }
}

pub fn lr_at(sched: &Schedule, t: usize, ctx: &ScheduleContext) -> f64 {
    sched.lr_at(t, ctx)
}
