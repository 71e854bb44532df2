//! Training from channel sets and history output.

use std::io::Write;

use anyhow::Result;
use nfwb_core::channel::ChannelMatrix;
use nfwb_core::diffusion::{train, EpochRecord, NoiseSchedule, TrainingConfig, TrainingReport};
use nfwb_core::network::NetworkConfig;

use crate::dataset::{normalized_planes, storage_scale};
use crate::exec::RayonExecutor;
use crate::formats::Checkpoint;

/// Trains on `train_set`, normalizing both sets by the training-set scale.
pub fn fit(
    train_set: &[ChannelMatrix],
    val_set: &[ChannelMatrix],
    net: NetworkConfig,
    schedule: &NoiseSchedule,
    tc: &TrainingConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<(Checkpoint, TrainingReport)> {
    let scale = storage_scale(train_set)?;
    let train_planes = normalized_planes(train_set, scale)?;
    let val_planes = normalized_planes(val_set, scale)?;
    let (params, report) = train(&train_planes, &val_planes, net, schedule, tc, &RayonExecutor, observer)?;
    let betas = schedule.betas();
    let ck = Checkpoint { params, steps: schedule.steps(), beta_start: betas[0], beta_end: betas[betas.len() - 1], scale };
    Ok((ck, report))
}

/// `epoch,train_loss,val_loss`; epoch 0 is the initial loss.
pub fn write_history_csv(w: &mut impl Write, report: &TrainingReport) -> Result<()> {
    let mut cw = csv::Writer::from_writer(w);
    cw.write_record(["epoch", "train_loss", "val_loss"])?;
    cw.write_record(["0".to_string(), format!("{:.17e}", report.initial_loss), String::new()])?;
    for r in &report.history {
        cw.write_record([r.epoch.to_string(), format!("{:.17e}", r.train_loss), r.val_loss.map(|v| format!("{v:.17e}")).unwrap_or_default()])?;
    }
    cw.flush()?;
    Ok(())
}
