use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    /// Global step counter, starting at 0.
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    /// Dictionary size after this step (queue fill, in-batch negatives, or sampled bank negatives).
    pub queue_fill: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub steps: usize,
    pub mean: f64,
    /// Population standard deviation of the step losses.
    pub std: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossLog {
    records: Vec<StepRecord>,
}

impl LossLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record; step counters must increase strictly.
    pub fn push(&mut self, rec: StepRecord) {
        if let Some(last) = self.records.last() {
            assert!(rec.step > last.step, "loss log steps must increase");
        }
        self.records.push(rec);
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    pub fn epoch_summaries(&self) -> Vec<EpochSummary> {
        let mut out: Vec<EpochSummary> = Vec::new();
        let mut i = 0;
        while i < self.records.len() {
            let epoch = self.records[i].epoch;
            let mut j = i;
            while j < self.records.len() && self.records[j].epoch == epoch {
                j += 1;
            }
            let xs: Vec<f64> = self.records[i..j].iter().map(|r| r.loss).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            out.push(EpochSummary {
                epoch,
                steps: xs.len(),
                mean,
                std: var.sqrt(),
            });
            i = j;
        }
        out
    }

    /// `epoch,step,loss,lr,queue_fill`; floats use shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,step,loss,lr,queue_fill\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.epoch, r.step, r.loss, r.lr, r.queue_fill
            );
        }
        s
    }

    pub fn epochs_csv(&self) -> String {
        let mut s = String::from("epoch,steps,mean_loss,std_loss\n");
        for e in self.epoch_summaries() {
            let _ = writeln!(s, "{},{},{},{}", e.epoch, e.steps, e.mean, e.std);
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}
