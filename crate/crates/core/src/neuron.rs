// SPDX-License-Identifier: Apache-2.0

//! Floating-point reference neuron dynamics.
//!
//! Three discrete models share one threshold/reset/refractory gate:
//!
//! * [`Lapicque`]: `u' = u + gain * i`, fires when `u' > threshold` (strict).
//! * [`Lif`]: `u' = beta * u + i`, fires when `u' >= threshold`.
//! * [`LifHw`]: `u' = beta * u + i - u_rest`, the float twin of the
//!   fixed-point neuron unit, fires like [`Lif`].
//!
//! The continuous RC membrane (`tau du/dt = -(u - u_rest) + R I`) is provided
//! as a closed-form step response and a forward-Euler integrator, used as a
//! validation oracle for the discrete models.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeuronError {
    #[error("invalid neuron parameter: {0}")]
    InvalidParams(String),
    #[error("forward Euler unstable: dt {dt} >= 2 tau ({tau})")]
    Unstable { dt: f64, tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResetMode {
    /// Membrane returns to 0 after a spike.
    #[default]
    Zero,
    /// Threshold is subtracted from the membrane after a spike.
    Subtract,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuronParams {
    pub beta: f64,
    pub threshold: f64,
    pub reset_mode: ResetMode,
    pub refractory_steps: u32,
    /// Lapicque input gain `T / C`.
    pub step_gain: f64,
    /// Resting potential subtracted each step by [`LifHw`].
    pub u_rest: f64,
}

impl Default for NeuronParams {
    fn default() -> Self {
        NeuronParams {
            beta: 0.95,
            threshold: 1.0,
            reset_mode: ResetMode::Zero,
            refractory_steps: 0,
            step_gain: 1.0,
            u_rest: 0.0,
        }
    }
}

impl NeuronParams {
    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_refractory(mut self, steps: u32) -> Self {
        self.refractory_steps = steps;
        self
    }

    pub fn with_reset(mut self, mode: ResetMode) -> Self {
        self.reset_mode = mode;
        self
    }

    /// `beta` may equal 1 (the leak-free limit); everything must be finite.
    pub fn validate(&self) -> Result<(), NeuronError> {
        let bad = |m: &str| Err(NeuronError::InvalidParams(m.to_string()));
        if !(0.0..=1.0).contains(&self.beta) {
            return bad("beta must lie in [0, 1]");
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return bad("threshold must be positive and finite");
        }
        if !self.step_gain.is_finite() || !self.u_rest.is_finite() {
            return bad("step_gain and u_rest must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NeuronState {
    pub u: f64,
    pub refractory_remaining: u32,
}

impl NeuronState {
    pub fn with_potential(u: f64) -> Self {
        NeuronState {
            u,
            refractory_remaining: 0,
        }
    }
}

/// A discrete membrane recurrence plus its firing comparison.
pub trait MembraneModel {
    /// Membrane potential before the threshold test.
    fn candidate(&self, u: f64, input: f64, p: &NeuronParams) -> f64;
    fn crosses(&self, candidate: f64, threshold: f64) -> bool;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Lapicque;

#[derive(Debug, Clone, Copy, Default)]
pub struct Lif;

#[derive(Debug, Clone, Copy, Default)]
pub struct LifHw;

impl MembraneModel for Lapicque {
    fn candidate(&self, u: f64, input: f64, p: &NeuronParams) -> f64 {
        u + p.step_gain * input
    }

    fn crosses(&self, candidate: f64, threshold: f64) -> bool {
        candidate > threshold
    }
}

impl MembraneModel for Lif {
    fn candidate(&self, u: f64, input: f64, p: &NeuronParams) -> f64 {
        p.beta * u + input
    }

    fn crosses(&self, candidate: f64, threshold: f64) -> bool {
        candidate >= threshold
    }
}

impl MembraneModel for LifHw {
    fn candidate(&self, u: f64, input: f64, p: &NeuronParams) -> f64 {
        p.beta * u + input - p.u_rest
    }

    fn crosses(&self, candidate: f64, threshold: f64) -> bool {
        candidate >= threshold
    }
}

fn reset(candidate: f64, p: &NeuronParams) -> f64 {
    match p.reset_mode {
        ResetMode::Zero => 0.0,
        ResetMode::Subtract => candidate - p.threshold,
    }
}

/// One step of `model` without refractory handling.
pub fn step<M: MembraneModel>(
    model: &M,
    state: NeuronState,
    input: f64,
    p: &NeuronParams,
) -> (NeuronState, bool) {
    let c = model.candidate(state.u, input, p);
    if model.crosses(c, p.threshold) {
        (
            NeuronState {
                u: reset(c, p),
                ..state
            },
            true,
        )
    } else {
        (NeuronState { u: c, ..state }, false)
    }
}

pub fn lapicque_step(state: NeuronState, input: f64, p: &NeuronParams) -> (NeuronState, bool) {
    step(&Lapicque, state, input, p)
}

pub fn lif_step(state: NeuronState, input: f64, p: &NeuronParams) -> (NeuronState, bool) {
    step(&Lif, state, input, p)
}

pub fn lif_hw_step(state: NeuronState, input: f64, p: &NeuronParams) -> (NeuronState, bool) {
    step(&LifHw, state, input, p)
}

/// One step of `model` behind the refractory gate.
///
/// While `refractory_remaining > 0` the membrane keeps integrating (no reset)
/// but firing is suppressed and the counter decrements. A spike reloads the
/// counter with `refractory_steps`, so a spike at `t` blocks `t+1 ..= t+k`.
pub fn apply_refractory<M: MembraneModel>(
    model: &M,
    state: NeuronState,
    input: f64,
    p: &NeuronParams,
) -> (NeuronState, bool) {
    if state.refractory_remaining > 0 {
        let u = model.candidate(state.u, input, p);
        return (
            NeuronState {
                u,
                refractory_remaining: state.refractory_remaining - 1,
            },
            false,
        );
    }
    let (mut next, spike) = step(model, state, input, p);
    if spike {
        next.refractory_remaining = p.refractory_steps;
    }
    (next, spike)
}

/// Parameters of the RC membrane circuit with a constant input current.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcParams {
    pub r: f64,
    pub c: f64,
    pub u_rest: f64,
    pub i: f64,
}

impl RcParams {
    pub fn tau(&self) -> f64 {
        self.r * self.c
    }

    pub fn validate(&self) -> Result<(), NeuronError> {
        if self.r > 0.0 && self.c > 0.0 && self.u_rest.is_finite() && self.i.is_finite() {
            Ok(())
        } else {
            Err(NeuronError::InvalidParams(
                "R and C must be positive".into(),
            ))
        }
    }
}

/// Step response `u_rest + R I (1 - exp(-t / tau))` from `u(0) = u_rest`.
pub fn rc_closed_form(t: f64, rc: &RcParams) -> f64 {
    rc.u_rest + rc.r * rc.i * (1.0 - (-t / rc.tau()).exp())
}

/// Forward-Euler trajectory `u_0 ..= u_n` starting at rest.
pub fn rc_integrate(rc: &RcParams, dt: f64, n_steps: usize) -> Result<Vec<f64>, NeuronError> {
    rc.validate()?;
    let tau = rc.tau();
    if !(dt > 0.0) {
        return Err(NeuronError::InvalidParams("dt must be positive".into()));
    }
    if dt >= 2.0 * tau {
        return Err(NeuronError::Unstable { dt, tau });
    }
    let mut u = rc.u_rest;
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(u);
    for _ in 0..n_steps {
        u += dt / tau * (-(u - rc.u_rest) + rc.r * rc.i);
        out.push(u);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(beta: f64, threshold: f64) -> NeuronParams {
        NeuronParams::default()
            .with_beta(beta)
            .with_threshold(threshold)
    }

    #[test]
    fn lapicque_examples() {
        let p = params(1.0, 1.0);
        let (s, spike) = lapicque_step(NeuronState::default(), 0.3, &p);
        assert_eq!(s.u, 0.3);
        assert!(!spike);

        let (s, spike) = lapicque_step(NeuronState::with_potential(0.9), 0.2, &p);
        assert!(spike);
        assert_eq!(s.u, 0.0);
    }

    #[test]
    fn lapicque_first_spike_matches_hand_iteration() {
        // 0.25, 0.5, 0.75, 1.0 (not > 1.0), 1.25 -> fires on step 5.
        let p = params(1.0, 1.0);
        let mut s = NeuronState::default();
        let mut first = None;
        for k in 1..=10 {
            let (next, spike) = lapicque_step(s, 0.25, &p);
            s = next;
            if spike {
                first = Some(k);
                break;
            }
        }
        assert_eq!(first, Some(5));
    }

    #[test]
    fn lapicque_is_strict_lif_is_not() {
        let p = params(1.0, 1.0);
        assert!(!lapicque_step(NeuronState::with_potential(0.5), 0.5, &p).1);
        assert!(lif_step(NeuronState::with_potential(0.5), 0.5, &p).1);
    }

    #[test]
    fn lif_examples() {
        let (s, spike) = lif_step(NeuronState::with_potential(0.5), 0.25, &params(0.5, 1.0));
        assert_eq!(s.u, 0.5);
        assert!(!spike);

        let (s, spike) = lif_step(NeuronState::with_potential(1.0), 0.5, &params(0.9, 1.0));
        assert!(spike);
        assert_eq!(s.u, 0.0);
    }

    #[test]
    fn subtract_reset_keeps_residue() {
        let p = params(1.0, 1.0).with_reset(ResetMode::Subtract);
        let (s, spike) = lif_step(NeuronState::with_potential(0.75), 0.5, &p);
        assert!(spike);
        assert_eq!(s.u, 0.25);
    }

    #[test]
    fn lif_pure_decay() {
        let p = params(0.9, 1.0);
        let mut s = NeuronState::with_potential(0.8);
        for k in 1..=30 {
            s = lif_step(s, 0.0, &p).0;
            assert!((s.u - 0.8 * 0.9f64.powi(k)).abs() < 1e-15);
        }
    }

    #[test]
    fn lif_hw_twin_examples() {
        let mut p = params(0.95, 1.0);
        p.u_rest = 0.05;
        let (s, _) = lif_hw_step(NeuronState::with_potential(0.2), 0.1, &p);
        assert!((s.u - 0.24).abs() < 1e-12);

        // u_rest = 0 collapses to plain LIF.
        let p0 = params(0.95, 1.0);
        for &(u, i) in &[(0.1, 0.2), (0.7, 0.4), (-0.3, 0.9)] {
            let a = lif_hw_step(NeuronState::with_potential(u), i, &p0);
            let b = lif_step(NeuronState::with_potential(u), i, &p0);
            assert_eq!(a, b);
        }

        // beta = 1 with i = u_rest is a fixed point.
        let mut p1 = params(1.0, 1.0);
        p1.u_rest = 0.3;
        let mut s = NeuronState::with_potential(0.42);
        for _ in 0..10 {
            s = lif_hw_step(s, 0.3, &p1).0;
            assert_eq!(s.u, 0.42);
        }
    }

    #[test]
    fn refractory_blocks_next_five_steps() {
        let p = params(0.9, 1.0).with_refractory(5);
        let mut s = NeuronState::default();
        let mut spikes = Vec::new();
        for t in 0..12 {
            // Drive is huge from t = 3 on; only the gate can stop firing.
            let input = if t >= 3 { 5.0 } else { 0.0 };
            let (next, spike) = apply_refractory(&Lif, s, input, &p);
            s = next;
            spikes.push(spike);
        }
        let fired: Vec<usize> = (0..12).filter(|&t| spikes[t]).collect();
        assert_eq!(fired, vec![3, 9]);
    }

    #[test]
    fn refractory_integrates_while_blocked() {
        let p = params(0.5, 1.0).with_refractory(2);
        let (s, spike) = apply_refractory(&Lif, NeuronState::default(), 2.0, &p);
        assert!(spike);
        assert_eq!(
            s,
            NeuronState {
                u: 0.0,
                refractory_remaining: 2
            }
        );
        let (s, spike) = apply_refractory(&Lif, s, 3.0, &p);
        assert!(!spike);
        assert_eq!(
            s,
            NeuronState {
                u: 3.0,
                refractory_remaining: 1
            }
        );
    }

    #[test]
    fn two_strong_inputs_two_apart_fire_once() {
        // Oracle: hand loop of the rule "fire iff candidate >= thr and not blocked".
        let p = params(0.5, 1.0).with_refractory(5);
        let input = |t: usize| if t == 1 || t == 3 { 2.0 } else { 0.0 };
        let mut s = NeuronState::default();
        let mut count = 0;
        for t in 0..10 {
            let (next, spike) = apply_refractory(&Lif, s, input(t), &p);
            s = next;
            count += spike as usize;
        }
        assert_eq!(count, 1);
    }

    #[test]
    fn params_validation() {
        assert!(NeuronParams::default().validate().is_ok());
        assert!(params(1.0, 1.0).validate().is_ok());
        assert!(params(1.1, 1.0).validate().is_err());
        assert!(params(0.5, 0.0).validate().is_err());
        assert!(params(0.5, f64::NAN).validate().is_err());
    }

    const RC: RcParams = RcParams {
        r: 2.0,
        c: 0.5,
        u_rest: -0.1,
        i: 0.75,
    };

    #[test]
    fn rc_closed_form_landmarks() {
        assert_eq!(rc_closed_form(0.0, &RC), RC.u_rest);
        let inf = rc_closed_form(1e6, &RC);
        assert!((inf - (RC.u_rest + RC.r * RC.i)).abs() < 1e-12);
        let at_tau = rc_closed_form(RC.tau(), &RC);
        let expected = RC.u_rest + RC.r * RC.i * (1.0 - (-1.0f64).exp());
        assert!((at_tau - expected).abs() < 1e-15);
        assert!(((at_tau - RC.u_rest) / (RC.r * RC.i) - 0.6321).abs() < 1e-4);
    }

    #[test]
    fn rc_euler_equilibrium_and_errors() {
        let rest = RcParams { i: 0.0, ..RC };
        let traj = rc_integrate(&rest, 0.01, 100).unwrap();
        assert!(traj.iter().all(|&u| u == rest.u_rest));
        assert!(matches!(
            rc_integrate(&RC, 2.0 * RC.tau(), 10),
            Err(NeuronError::Unstable { .. })
        ));
        assert!(rc_integrate(&RC, 0.0, 10).is_err());
        assert!(rc_integrate(&RcParams { r: -1.0, ..RC }, 0.01, 10).is_err());
    }

    fn max_euler_error(rc: &RcParams, divisions: usize, span_taus: usize) -> f64 {
        let dt = rc.tau() / divisions as f64;
        let traj = rc_integrate(rc, dt, divisions * span_taus).unwrap();
        traj.iter()
            .enumerate()
            .map(|(k, &u)| (u - rc_closed_form(k as f64 * dt, rc)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn rc_euler_converges_first_order() {
        let scale = RC.r * RC.i;
        let e1 = max_euler_error(&RC, 1000, 5);
        let e2 = max_euler_error(&RC, 2000, 5);
        assert!(e1 < 1e-3 * scale, "{e1}");
        let ratio = e1 / e2;
        assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
    }

    proptest! {
        #[test]
        fn decay_law(beta in 0.0f64..1.0, u0 in -1.0f64..1.0, steps in 1usize..60) {
            let p = params(beta, 1.0);
            let mut s = NeuronState::with_potential(u0);
            for _ in 0..steps {
                s = lif_step(s, 0.0, &p).0;
            }
            let expected = beta.powi(steps as i32) * u0;
            prop_assert!((s.u - expected).abs() <= 1e-12 * u0.abs().max(1e-300) + 1e-300);
        }

        #[test]
        fn reset_completeness(u in 0.0f64..2.0, i1 in 0.0f64..3.0, i2 in -1.0f64..1.0) {
            let p = params(0.9, 1.0);
            let (s, spike) = lif_step(NeuronState::with_potential(u), i1, &p);
            if spike {
                let next_candidate = Lif.candidate(s.u, i2, &p);
                prop_assert_eq!(next_candidate, i2);
            }
        }

        #[test]
        fn never_fires_while_refractory(inputs in proptest::collection::vec(-1.0f64..4.0, 1..60), k in 0u32..8) {
            let p = params(0.8, 1.0).with_refractory(k);
            let mut s = NeuronState::default();
            let mut last_spike: Option<usize> = None;
            for (t, &i) in inputs.iter().enumerate() {
                let blocked = s.refractory_remaining > 0;
                let candidate = Lif.candidate(s.u, i, &p);
                let (next, spike) = apply_refractory(&Lif, s, i, &p);
                prop_assert_eq!(spike, !blocked && candidate >= p.threshold);
                if let Some(l) = last_spike {
                    prop_assert!(!spike || t - l > k as usize);
                }
                prop_assert!(next.refractory_remaining <= k);
                if spike { last_spike = Some(t); }
                s = next;
            }
        }

        #[test]
        fn lapicque_matches_leak_free_lif(inputs in proptest::collection::vec(0.0f64..0.7, 1..40)) {
            // beta = 1, gain = 1: trajectories agree unless a candidate lands
            // exactly on the threshold.
            let p = params(1.0, 1.0);
            let (mut a, mut b) = (NeuronState::default(), NeuronState::default());
            for &i in &inputs {
                let on_threshold = Lif.candidate(b.u, i, &p) == p.threshold;
                let (na, sa) = lapicque_step(a, i, &p);
                let (nb, sb) = lif_step(b, i, &p);
                if on_threshold {
                    break;
                }
                prop_assert_eq!(sa, sb);
                prop_assert_eq!(na.u, nb.u);
                a = na;
                b = nb;
            }
        }
    }
}
