//! Sensor data files: CSV without header, one agent per row, the weight
//! first and the anchor coordinates after it.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context};
use dsbcd_core::oracle::QuadraticSensorObjective;

#[derive(Debug, Clone, PartialEq)]
pub struct SensorData {
    pub weights: Vec<f64>,
    pub anchors: Vec<Vec<f64>>,
}

impl SensorData {
    pub fn num_agents(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.anchors.first().map_or(0, Vec::len)
    }

    pub fn objective(&self) -> dsbcd_core::Result<QuadraticSensorObjective> {
        QuadraticSensorObjective::new(self.weights.clone(), self.anchors.clone())
    }
}

impl From<&QuadraticSensorObjective> for SensorData {
    fn from(obj: &QuadraticSensorObjective) -> Self {
        SensorData {
            weights: obj.weights().to_vec(),
            anchors: obj.anchors().to_vec(),
        }
    }
}

pub fn read_sensor_data(path: &Path) -> anyhow::Result<SensorData> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse_sensor_data(file).with_context(|| format!("reading {}", path.display()))
}

pub fn parse_sensor_data<R: Read>(input: R) -> anyhow::Result<SensorData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut data = SensorData {
        weights: Vec::new(),
        anchors: Vec::new(),
    };
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let values = record
            .iter()
            .map(|f| f.parse::<f64>().with_context(|| format!("row {}: bad number {f:?}", i + 1)))
            .collect::<anyhow::Result<Vec<_>>>()?;
        if values.len() < 2 {
            bail!("row {}: need a weight and at least one anchor coordinate", i + 1);
        }
        if values[0] < 0.0 || !values.iter().all(|v| v.is_finite()) {
            bail!("row {}: weight must be nonnegative and values finite", i + 1);
        }
        if let Some(first) = data.anchors.first() {
            if first.len() != values.len() - 1 {
                bail!("row {}: expected {} anchor coordinates", i + 1, first.len());
            }
        }
        data.weights.push(values[0]);
        data.anchors.push(values[1..].to_vec());
    }
    if data.weights.is_empty() {
        bail!("no agents in data file");
    }
    Ok(data)
}

pub fn write_sensor_data<W: Write>(data: &SensorData, out: W) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for (a, b) in data.weights.iter().zip(&data.anchors) {
        let row: Vec<String> = std::iter::once(a).chain(b).map(|v| v.to_string()).collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
