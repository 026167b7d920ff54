//! Raw injection records: one CSV row per injection, preceded by `#`
//! provenance lines holding the campaign configuration and calibrations.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CampaignConfig, SizeCalibration};
use crate::error::{Error, Result};
use crate::fault::FaultOutcome;
use crate::registry::{FlipFlopId, RegGroup};

pub const RECORDS_FILE: &str = "records.csv";
const MAGIC: &str = "# sa-seu records v1";
const CONFIG_TAG: &str = "# config ";
const CALIBRATION_TAG: &str = "# calibration ";
pub const CSV_HEADER: &str =
    "size,iteration,group,row,col,chain_pos,bit,cycle,propagated,magnitude";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Size {
    pub rows: usize,
    pub cols: usize,
}

impl Size {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }
}

impl std::fmt::Display for Size {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl std::str::FromStr for Size {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("size '{s}' is not of the form RxC"));
        let (r, c) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
        let rows = r.parse().map_err(|_| bad())?;
        let cols = c.parse().map_err(|_| bad())?;
        if rows == 0 || cols == 0 {
            return Err(Error::ZeroDimension { rows, cols });
        }
        Ok(Self { rows, cols })
    }
}

impl TryFrom<String> for Size {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Size> for String {
    fn from(s: Size) -> String {
        s.to_string()
    }
}

/// One injection, flattened for the CSV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub size: Size,
    pub iteration: u64,
    pub group: RegGroup,
    pub row: usize,
    pub col: usize,
    pub chain_pos: usize,
    pub bit: u8,
    pub cycle: u32,
    #[serde(with = "bool_as_int")]
    pub propagated: bool,
    pub magnitude: u32,
}

impl FaultRecord {
    pub fn new(size: Size, iteration: u64, outcome: &FaultOutcome) -> Self {
        let ff = outcome.spec.ff;
        Self {
            size,
            iteration,
            group: ff.group,
            row: ff.row,
            col: ff.col,
            chain_pos: ff.chain_pos,
            bit: ff.bit,
            cycle: outcome.spec.cycle,
            propagated: outcome.propagated,
            magnitude: outcome.magnitude,
        }
    }

    pub fn ff(&self) -> FlipFlopId {
        FlipFlopId {
            group: self.group,
            row: self.row,
            col: self.col,
            chain_pos: self.chain_pos,
            bit: self.bit,
        }
    }
}

mod bool_as_int {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(D::Error::custom(format!(
                "propagated must be 0 or 1, got {other}"
            ))),
        }
    }
}

/// Provenance stored ahead of the records.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordsHeader {
    pub config: CampaignConfig,
    pub calibrations: Vec<SizeCalibration>,
}

/// Appends records in iteration order.
pub struct RecordWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl RecordWriter {
    /// Creates (truncating) `path` and writes the provenance block.
    pub fn create(path: &Path, header: &RecordsHeader) -> Result<Self> {
        let mut file = BufWriter::new(File::create(path)?);
        writeln!(file, "{MAGIC}")?;
        writeln!(
            file,
            "{CONFIG_TAG}{}",
            serde_json::to_string(&header.config)?
        )?;
        for cal in &header.calibrations {
            writeln!(file, "{CALIBRATION_TAG}{}", serde_json::to_string(cal)?)?;
        }
        writeln!(file, "{CSV_HEADER}")?;
        file.flush()?;
        Ok(Self {
            inner: Self::wrap(file),
        })
    }

    /// Continues an existing, already validated file.
    pub fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self {
            inner: Self::wrap(BufWriter::new(file)),
        })
    }

    fn wrap(file: BufWriter<File>) -> csv::Writer<BufWriter<File>> {
        csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(file)
    }

    pub fn write(&mut self, record: &FaultRecord) -> Result<()> {
        self.inner.serialize(record)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Everything read back from a record file.
#[derive(Debug, Clone)]
pub struct RecordFile {
    pub header: RecordsHeader,
    pub records: Vec<FaultRecord>,
}

impl RecordFile {
    /// Number of leading iterations completed for each configured size.
    pub fn watermark(&self) -> Vec<(Size, u64)> {
        watermark(&self.header.config, &self.records)
    }
}

fn watermark(config: &CampaignConfig, records: &[FaultRecord]) -> Vec<(Size, u64)> {
    config
        .sizes
        .iter()
        .map(|&s| (s, records.iter().filter(|r| r.size == s).count() as u64))
        .collect()
}

fn corrupt(
    path: &Path,
    reason: String,
    config: Option<&CampaignConfig>,
    records: &[FaultRecord],
) -> Error {
    Error::CorruptRecords {
        path: path.to_path_buf(),
        reason,
        watermark: config
            .map(|c| {
                watermark(c, records)
                    .into_iter()
                    .map(|(s, n)| (s.to_string(), n))
                    .collect()
            })
            .unwrap_or_default(),
    }
}

/// Reads and validates a record file. With `repair`, a trailing line cut
/// short by an interruption is removed from the file; otherwise it is
/// ignored.
pub fn read_records(path: &Path, repair: bool) -> Result<RecordFile> {
    let mut file = OpenOptions::new().read(true).write(repair).open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if complete < bytes.len() {
        bytes.truncate(complete);
        if repair {
            file.set_len(complete as u64)?;
            file.seek(SeekFrom::End(0))?;
        }
    }
    let text = String::from_utf8(bytes).map_err(|e| corrupt(path, e.to_string(), None, &[]))?;

    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(corrupt(
            path,
            "missing record file signature".into(),
            None,
            &[],
        ));
    }
    let mut config = None;
    let mut calibrations = Vec::new();
    let mut body_start = MAGIC.len() + 1;
    for line in lines {
        body_start += line.len() + 1;
        if let Some(json) = line.strip_prefix(CONFIG_TAG) {
            config = Some(
                serde_json::from_str::<CampaignConfig>(json)
                    .map_err(|e| corrupt(path, e.to_string(), None, &[]))?,
            );
        } else if let Some(json) = line.strip_prefix(CALIBRATION_TAG) {
            calibrations.push(
                serde_json::from_str(json).map_err(|e| corrupt(path, e.to_string(), None, &[]))?,
            );
        } else if line == CSV_HEADER {
            break;
        } else {
            return Err(corrupt(
                path,
                format!("unexpected header line '{line}'"),
                None,
                &[],
            ));
        }
    }
    let config =
        config.ok_or_else(|| corrupt(path, "missing configuration line".into(), None, &[]))?;
    let header = RecordsHeader {
        config,
        calibrations,
    };
    let body = text.get(body_start.min(text.len())..).unwrap_or("");

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(body.as_bytes());
    let mut records = Vec::new();
    let mut expected = ExpectedOrder::new(&header.config);
    for (i, row) in reader.deserialize::<FaultRecord>().enumerate() {
        let record = row.map_err(|e| {
            corrupt(
                path,
                format!("record {}: {e}", i + 1),
                Some(&header.config),
                &records,
            )
        })?;
        if let Err(reason) = expected.accept(&record) {
            return Err(corrupt(
                path,
                format!("record {}: {reason}", i + 1),
                Some(&header.config),
                &records,
            ));
        }
        records.push(record);
    }
    Ok(RecordFile { header, records })
}

/// Records must appear size by size, iterations ascending from 0.
struct ExpectedOrder<'a> {
    config: &'a CampaignConfig,
    size: usize,
    next: u64,
}

impl<'a> ExpectedOrder<'a> {
    fn new(config: &'a CampaignConfig) -> Self {
        Self {
            config,
            size: 0,
            next: 0,
        }
    }

    fn accept(&mut self, r: &FaultRecord) -> std::result::Result<(), String> {
        while self.size < self.config.sizes.len() && self.next == self.config.iterations {
            self.size += 1;
            self.next = 0;
        }
        let want = self
            .config
            .sizes
            .get(self.size)
            .ok_or_else(|| "more records than configured".to_string())?;
        if r.size != *want || r.iteration != self.next {
            return Err(format!(
                "expected {want} iteration {}, found {} iteration {}",
                self.next, r.size, r.iteration
            ));
        }
        self.next += 1;
        Ok(())
    }
}

pub fn records_path(dir: &Path) -> PathBuf {
    dir.join(RECORDS_FILE)
}
