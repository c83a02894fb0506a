//! Site power draw and energy-buffer dynamics.
//!
//! Powers are configured in watts; every per-slot quantity returned by this
//! module is an energy in kJ, i.e. `watts * slot_seconds / 1000`.

use core::fmt;

use crate::error::ConfigError;

/// Physical and policy constants of one off-grid BS + MEC site.
///
/// `Default` carries the reference parameter set: a 10.6 W BS, 50 W microwave
/// backhaul, a 27-VM server drawing 30 W idle and up to 472.3 W dynamic, and a
/// 490 kJ buffer with the low-energy threshold at 30% of capacity.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SiteConfig {
    /// BS load-independent operating power (W).
    pub theta0: f64,
    /// Backhaul power (W), constant in both radio modes.
    pub theta_bh: f64,
    /// Server idle power (W).
    pub theta_idle: f64,
    /// Server dynamic power at full utilization (W).
    pub theta_dyn_max: f64,
    /// Downlink transmit power at full normalized load (W).
    pub theta_tx_max: f64,
    /// Power-saving scale applied to `theta0` in sleep mode, in (0, 1).
    pub epsilon: f64,
    /// Maximum number of VMs, M.
    pub m_vms: u32,
    /// Minimum number of active VMs, b.
    pub b_min_vms: u32,
    /// Energy buffer capacity (kJ).
    pub beta_max: f64,
    /// Low buffer threshold steering the sleep heuristic (kJ).
    pub beta_low: f64,
    /// Maximum load that can be served in one slot (MB).
    pub l_max: f64,
    /// Low-traffic threshold (MB).
    pub l_low: f64,
    /// Server clock (MHz). Informational; the power figures already assume it.
    pub f_mhz: f64,
    /// Slot length (s).
    pub slot_seconds: f64,
    /// Also scale the transmit term by `epsilon` in sleep mode.
    pub sleep_scales_tx: bool,
}

impl Default for SiteConfig {
    fn default() -> Self {
        Self {
            theta0: 10.6,
            theta_bh: 50.0,
            theta_idle: 30.0,
            theta_dyn_max: 472.3,
            theta_tx_max: 20.0,
            epsilon: 0.3,
            m_vms: 27,
            b_min_vms: 3,
            beta_max: 490.0,
            beta_low: 147.0,
            l_max: 15.0,
            l_low: 4.0,
            f_mhz: 1600.0,
            slot_seconds: 3600.0,
            sleep_scales_tx: false,
        }
    }
}

impl SiteConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite = [
            ("theta0", self.theta0),
            ("theta_bh", self.theta_bh),
            ("theta_idle", self.theta_idle),
            ("theta_dyn_max", self.theta_dyn_max),
            ("theta_tx_max", self.theta_tx_max),
            ("epsilon", self.epsilon),
            ("beta_max", self.beta_max),
            ("beta_low", self.beta_low),
            ("l_max", self.l_max),
            ("l_low", self.l_low),
            ("f_mhz", self.f_mhz),
            ("slot_seconds", self.slot_seconds),
        ];
        for (field, v) in finite {
            if !v.is_finite() {
                return Err(ConfigError::new(field, "must be finite"));
            }
        }
        for (field, v) in [
            ("theta0", self.theta0),
            ("theta_bh", self.theta_bh),
            ("theta_idle", self.theta_idle),
            ("theta_dyn_max", self.theta_dyn_max),
            ("theta_tx_max", self.theta_tx_max),
        ] {
            if v < 0.0 {
                return Err(ConfigError::new(field, "power must be >= 0"));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(ConfigError::new("epsilon", "must lie in (0, 1)"));
        }
        if self.b_min_vms < 1 {
            return Err(ConfigError::new("b_min_vms", "must be >= 1"));
        }
        if self.b_min_vms > self.m_vms {
            return Err(ConfigError::new("b_min_vms", "must not exceed m_vms"));
        }
        if !(self.beta_low > 0.0 && self.beta_low < self.beta_max) {
            return Err(ConfigError::new("beta_low", "must lie in (0, beta_max)"));
        }
        if !(self.l_low > 0.0 && self.l_low < self.l_max) {
            return Err(ConfigError::new("l_low", "must lie in (0, l_max)"));
        }
        if self.slot_seconds <= 0.0 {
            return Err(ConfigError::new("slot_seconds", "must be > 0"));
        }
        Ok(())
    }

    /// Converts a constant power draw over one slot into kJ.
    #[inline]
    pub fn slot_kj(&self, watts: f64) -> f64 {
        watts * self.slot_seconds / 1000.0
    }

    /// Smallest utilization factor that still keeps `b` VMs on: `b / M`.
    pub fn gamma_min(&self) -> f64 {
        f64::from(self.b_min_vms) / f64::from(self.m_vms)
    }

    /// Largest per-slot draw: radio active, all VMs on, full load.
    pub fn theta_max_kj(&self) -> f64 {
        site_energy(ControlAction::FULL, 1.0, self)
    }
}

/// BS radio mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SwitchMode {
    /// Power saving; static consumption scaled by `epsilon`.
    Saving,
    Active,
}

impl SwitchMode {
    /// Numeric switching indicator: `epsilon` or 1.
    pub fn factor(self, cfg: &SiteConfig) -> f64 {
        match self {
            SwitchMode::Active => 1.0,
            SwitchMode::Saving => cfg.epsilon,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SwitchMode::Active => "active",
            SwitchMode::Saving => "saving",
        }
    }
}

impl fmt::Display for SwitchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One control input: radio mode and server utilization factor.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ControlAction {
    pub zeta: SwitchMode,
    pub gamma: f64,
}

impl ControlAction {
    /// Radio active with every VM running.
    pub const FULL: ControlAction = ControlAction {
        zeta: SwitchMode::Active,
        gamma: 1.0,
    };

    /// Builds an action, rejecting `gamma` outside (0, 1].
    pub fn new(zeta: SwitchMode, gamma: f64) -> Option<Self> {
        (gamma > 0.0 && gamma <= 1.0).then_some(Self { zeta, gamma })
    }

    /// Checks the utilization bound, mode set and VM floor for `cfg`.
    pub fn is_feasible(&self, cfg: &SiteConfig) -> bool {
        self.gamma > 0.0 && self.gamma <= 1.0 && vm_count(self.gamma, cfg.m_vms) >= cfg.b_min_vms
    }
}

/// Observable site state at the start of a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SystemState {
    /// Active VMs.
    pub vms: u32,
    /// Buffer level (kJ).
    pub buffer_kj: f64,
}

impl SystemState {
    pub fn new(vms: u32, buffer_kj: f64) -> Self {
        Self { vms, buffer_kj }
    }
}

/// Number of VMs needed to run at utilization `gamma`: `gamma * m` rounded
/// half-up, never below one.
pub fn vm_count(gamma: f64, m: u32) -> u32 {
    let raw = libm::floor(gamma * f64::from(m) + 0.5);
    (raw.max(1.0) as u32).min(m)
}

/// Downlink transmit power (W), linear in normalized load.
pub fn tx_power(phi: f64, cfg: &SiteConfig) -> f64 {
    cfg.theta_tx_max * phi
}

/// Server energy over one slot (kJ).
pub fn mec_energy(gamma: f64, cfg: &SiteConfig) -> f64 {
    cfg.slot_kj(cfg.theta_idle + gamma * cfg.theta_dyn_max)
}

/// Total site draw over one slot (kJ) for `action` at normalized load `phi`.
pub fn site_energy(action: ControlAction, phi: f64, cfg: &SiteConfig) -> f64 {
    let zeta = action.zeta.factor(cfg);
    let tx = if cfg.sleep_scales_tx {
        zeta * tx_power(phi, cfg)
    } else {
        tx_power(phi, cfg)
    };
    cfg.slot_kj(zeta * cfg.theta0 + tx + cfg.theta_bh) + mec_energy(action.gamma, cfg)
}

/// Result of one buffer update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferStep {
    /// Level at the start of the next slot, clamped into `[0, beta_max]`.
    pub next: f64,
    /// Energy demanded beyond what the buffer held (outage).
    pub deficit: f64,
    /// Harvest that did not fit in the buffer.
    pub spill: f64,
}

/// Advances the buffer by one slot: `beta + harvested - drained`, clamped.
pub fn step_buffer(beta: f64, harvested: f64, drained: f64, cfg: &SiteConfig) -> BufferStep {
    let raw = beta + harvested - drained;
    if raw < 0.0 {
        BufferStep {
            next: 0.0,
            deficit: -raw,
            spill: 0.0,
        }
    } else if raw > cfg.beta_max {
        BufferStep {
            next: cfg.beta_max,
            deficit: 0.0,
            spill: raw - cfg.beta_max,
        }
    } else {
        BufferStep {
            next: raw,
            deficit: 0.0,
            spill: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cfg() -> SiteConfig {
        SiteConfig::default()
    }

    #[test]
    fn defaults_validate() {
        cfg().validate().unwrap();
    }

    #[test]
    fn validation_names_field() {
        let mut c = cfg();
        c.epsilon = 1.0;
        assert_eq!(c.validate().unwrap_err().field, "epsilon");
        let mut c = cfg();
        c.b_min_vms = 28;
        assert_eq!(c.validate().unwrap_err().field, "b_min_vms");
        let mut c = cfg();
        c.beta_low = 500.0;
        assert_eq!(c.validate().unwrap_err().field, "beta_low");
    }

    #[test]
    fn vm_count_examples() {
        assert_eq!(vm_count(1.0, 27), 27);
        assert_eq!(vm_count(0.5, 27), 14);
        assert_eq!(vm_count(0.1111, 27), 3);
        assert_eq!(vm_count(cfg().gamma_min(), 27), 3);
        assert_eq!(vm_count(1e-6, 27), 1);
    }

    #[test]
    fn tx_power_examples() {
        let c = cfg();
        assert_eq!(tx_power(0.0, &c), 0.0);
        assert_eq!(tx_power(1.0, &c), 20.0);
        assert_eq!(tx_power(0.5, &c), 10.0);
    }

    #[test]
    fn mec_energy_examples() {
        let c = cfg();
        assert_abs_diff_eq!(mec_energy(1.0, &c), 1808.28, epsilon = 1e-9);
        assert_abs_diff_eq!(mec_energy(0.1111, &c), 296.9, epsilon = 0.1);
        let mut flat = c;
        flat.theta_dyn_max = 0.0;
        assert_abs_diff_eq!(mec_energy(0.2, &flat), 108.0, epsilon = 1e-9);
        assert_abs_diff_eq!(mec_energy(0.9, &flat), 108.0, epsilon = 1e-9);
    }

    #[test]
    fn site_energy_examples() {
        let c = cfg();
        assert_abs_diff_eq!(
            site_energy(ControlAction::FULL, 0.0, &c),
            2026.44,
            epsilon = 1e-9
        );
        let low = ControlAction::new(SwitchMode::Saving, 0.1111).unwrap();
        assert_abs_diff_eq!(site_energy(low, 0.0, &c), 488.3, epsilon = 0.1);
        // transmit term only scales in sleep when asked to
        let mut scaled = c;
        scaled.sleep_scales_tx = true;
        let a = site_energy(low, 1.0, &c) - site_energy(low, 0.0, &c);
        let b = site_energy(low, 1.0, &scaled) - site_energy(low, 0.0, &scaled);
        assert_abs_diff_eq!(a, 72.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b, 0.3 * 72.0, epsilon = 1e-9);
    }

    #[test]
    fn step_buffer_examples() {
        let c = cfg();
        let s = step_buffer(300.0, 50.0, 100.0, &c);
        assert_eq!((s.next, s.deficit, s.spill), (250.0, 0.0, 0.0));
        let s = step_buffer(480.0, 50.0, 10.0, &c);
        assert_eq!((s.next, s.deficit, s.spill), (490.0, 0.0, 30.0));
        let s = step_buffer(50.0, 0.0, 100.0, &c);
        assert_eq!((s.next, s.deficit, s.spill), (0.0, 50.0, 0.0));
    }

    #[test]
    fn kj_is_watts_times_seconds_over_1000() {
        let mut c = cfg();
        c.slot_seconds = 1000.0;
        let a = ControlAction::new(SwitchMode::Active, 0.4).unwrap();
        let watts =
            c.theta0 + tx_power(0.3, &c) + c.theta_bh + c.theta_idle + 0.4 * c.theta_dyn_max;
        assert_abs_diff_eq!(site_energy(a, 0.3, &c), watts, epsilon = 1e-9);
        assert_abs_diff_eq!(
            mec_energy(0.4, &c),
            c.theta_idle + 0.4 * c.theta_dyn_max,
            epsilon = 1e-9
        );
    }

    fn mode() -> impl Strategy<Value = SwitchMode> {
        prop_oneof![Just(SwitchMode::Active), Just(SwitchMode::Saving)]
    }

    proptest! {
        #[test]
        fn buffer_conserves_energy(beta in 0.0..490.0f64, h in 0.0..600.0f64, d in 0.0..2500.0f64) {
            let c = cfg();
            let s = step_buffer(beta, h, d, &c);
            prop_assert!(s.next >= 0.0 && s.next <= c.beta_max);
            prop_assert!(s.deficit == 0.0 || s.spill == 0.0);
            prop_assert!((s.next - beta - (h - d) - s.deficit + s.spill).abs() < 1e-9);
        }

        #[test]
        fn energy_increasing_in_gamma_and_load(z in mode(), g1 in 0.01..1.0f64, g2 in 0.01..1.0f64, p1 in 0.0..1.0f64, p2 in 0.0..1.0f64) {
            let c = cfg();
            let (glo, ghi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
            let (plo, phi) = if p1 < p2 { (p1, p2) } else { (p2, p1) };
            let lo = ControlAction { zeta: z, gamma: glo };
            let hi = ControlAction { zeta: z, gamma: ghi };
            if glo < ghi {
                prop_assert!(site_energy(lo, plo, &c) < site_energy(hi, plo, &c));
            }
            prop_assert!(site_energy(lo, plo, &c) <= site_energy(lo, phi, &c));
        }

        #[test]
        fn saving_draws_less(g in 0.01..1.0f64, p in 0.0..1.0f64) {
            let c = cfg();
            let s = site_energy(ControlAction { zeta: SwitchMode::Saving, gamma: g }, p, &c);
            let a = site_energy(ControlAction { zeta: SwitchMode::Active, gamma: g }, p, &c);
            prop_assert!(s < a);
        }

        #[test]
        fn vm_count_monotone_and_bounded(g1 in 1e-6..=1.0f64, g2 in 1e-6..=1.0f64, m in 1u32..64) {
            let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
            prop_assert!(vm_count(lo, m) <= vm_count(hi, m));
            prop_assert!((1..=m).contains(&vm_count(lo, m)));
        }
    }
}
