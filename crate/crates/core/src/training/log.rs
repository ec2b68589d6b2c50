use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossEntry {
    pub epoch: usize,
    pub phase: String,
    pub loss: f64,
}

/// Per-epoch mean losses, one entry per (epoch, phase).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossLog {
    pub entries: Vec<LossEntry>,
}

impl LossLog {
    pub fn push(&mut self, epoch: usize, phase: &str, loss: f64) {
        self.entries.push(LossEntry { epoch, phase: phase.to_string(), loss });
    }

    /// Losses of one phase in epoch order.
    pub fn phase(&self, phase: &str) -> Vec<f64> {
        self.entries.iter().filter(|e| e.phase == phase).map(|e| e.loss).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        if self.entries.is_empty() {
            w.write_record(["epoch", "phase", "loss"])?;
        }
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let entries = csv::Reader::from_reader(reader).deserialize().collect::<std::result::Result<_, _>>()?;
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Running mean of batch losses weighted by batch size.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct MeanAccumulator {
    sum: f64,
    count: usize,
}

impl MeanAccumulator {
    pub(crate) fn add(&mut self, loss: f64, n: usize) {
        self.sum += loss * n as f64;
        self.count += n;
    }

    pub(crate) fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}
