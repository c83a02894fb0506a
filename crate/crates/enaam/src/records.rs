//! Per-slot simulation output as CSV. Nested fields are flattened with a dot,
//! so `state_before` becomes `state_before.vms` and `state_before.buffer_kj`.

use std::path::Path;

use enaam_core::power::{ControlAction, SwitchMode, SystemState};
use enaam_core::simulator::SlotRecord;
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
struct SlotRow {
    slot: usize,
    #[serde(rename = "state_before.vms")]
    state_before_vms: u32,
    #[serde(rename = "state_before.buffer_kj")]
    state_before_buffer_kj: f64,
    #[serde(rename = "action.zeta")]
    action_zeta: SwitchMode,
    #[serde(rename = "action.gamma")]
    action_gamma: f64,
    vms: u32,
    phi: f64,
    gamma_served: f64,
    remote_share: f64,
    drained_kj: f64,
    harvested_kj: f64,
    buffer_after: f64,
    deficit_kj: f64,
    spill_kj: f64,
    cost_j_realized: f64,
    forecast_load: f64,
    true_load: f64,
}

impl From<&SlotRecord> for SlotRow {
    fn from(r: &SlotRecord) -> Self {
        Self {
            slot: r.slot,
            state_before_vms: r.state_before.vms,
            state_before_buffer_kj: r.state_before.buffer_kj,
            action_zeta: r.action.zeta,
            action_gamma: r.action.gamma,
            vms: r.vms,
            phi: r.phi,
            gamma_served: r.gamma_served,
            remote_share: r.remote_share,
            drained_kj: r.drained_kj,
            harvested_kj: r.harvested_kj,
            buffer_after: r.buffer_after,
            deficit_kj: r.deficit_kj,
            spill_kj: r.spill_kj,
            cost_j_realized: r.cost_j_realized,
            forecast_load: r.forecast_load,
            true_load: r.true_load,
        }
    }
}

impl From<SlotRow> for SlotRecord {
    fn from(r: SlotRow) -> Self {
        Self {
            slot: r.slot,
            state_before: SystemState::new(r.state_before_vms, r.state_before_buffer_kj),
            action: ControlAction {
                zeta: r.action_zeta,
                gamma: r.action_gamma,
            },
            vms: r.vms,
            phi: r.phi,
            gamma_served: r.gamma_served,
            remote_share: r.remote_share,
            drained_kj: r.drained_kj,
            harvested_kj: r.harvested_kj,
            buffer_after: r.buffer_after,
            deficit_kj: r.deficit_kj,
            spill_kj: r.spill_kj,
            cost_j_realized: r.cost_j_realized,
            forecast_load: r.forecast_load,
            true_load: r.true_load,
        }
    }
}

pub fn write_slot_records(path: impl AsRef<Path>, records: &[SlotRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(SlotRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_slot_records(path: impl AsRef<Path>) -> csv::Result<Vec<SlotRecord>> {
    csv::Reader::from_path(path)?
        .deserialize::<SlotRow>()
        .map(|row| row.map(SlotRecord::from))
        .collect()
}
