use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::opmode::{OpModeId, ALL_OPMODES};
use crate::error::{Error, Result};

const SYNTHETIC: &str = include_str!("../../data/synthetic_rates.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pollutant {
    #[serde(rename = "CO2")]
    Co2,
    #[serde(rename = "CO")]
    Co,
    #[serde(rename = "HC")]
    Hc,
    #[serde(rename = "NOx")]
    Nox,
}

impl Pollutant {
    pub const ALL: [Pollutant; 4] = [Pollutant::Co2, Pollutant::Co, Pollutant::Hc, Pollutant::Nox];

    pub fn as_str(self) -> &'static str {
        match self {
            Pollutant::Co2 => "CO2",
            Pollutant::Co => "CO",
            Pollutant::Hc => "HC",
            Pollutant::Nox => "NOx",
        }
    }
}

impl fmt::Display for Pollutant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pollutant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pollutant::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown pollutant {s:?}")))
    }
}

/// One value per pollutant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerPollutant<T> {
    #[serde(rename = "CO2")]
    pub co2: T,
    #[serde(rename = "CO")]
    pub co: T,
    #[serde(rename = "HC")]
    pub hc: T,
    #[serde(rename = "NOx")]
    pub nox: T,
}

impl<T> PerPollutant<T> {
    pub fn from_fn(mut f: impl FnMut(Pollutant) -> T) -> Self {
        Self {
            co2: f(Pollutant::Co2),
            co: f(Pollutant::Co),
            hc: f(Pollutant::Hc),
            nox: f(Pollutant::Nox),
        }
    }

    pub fn get(&self, p: Pollutant) -> &T {
        match p {
            Pollutant::Co2 => &self.co2,
            Pollutant::Co => &self.co,
            Pollutant::Hc => &self.hc,
            Pollutant::Nox => &self.nox,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> PerPollutant<U> {
        PerPollutant::from_fn(|p| f(self.get(p)))
    }
}

/// Emission rate (g/hr) for every pollutant and operating mode.
///
/// Construction checks completeness, so lookups never fail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpModeRateTable {
    rates: BTreeMap<(Pollutant, OpModeId), f64>,
    /// Informational `#key=value` header lines, e.g. regulatory class.
    pub metadata: BTreeMap<String, String>,
}

impl OpModeRateTable {
    pub fn new(
        rates: BTreeMap<(Pollutant, OpModeId), f64>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self> {
        let missing: Vec<String> = Pollutant::ALL
            .iter()
            .flat_map(|&p| ALL_OPMODES.iter().map(move |&op| (p, op)))
            .filter(|key| !rates.contains_key(key))
            .map(|(p, op)| format!("{p}/{op}"))
            .collect();
        if !missing.is_empty() {
            return Err(Error::IncompleteRateTable { missing });
        }
        if let Some(((p, op), r)) = rates.iter().find(|(_, r)| !(**r >= 0.0 && r.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "rate for {p}/{op} must be finite and >= 0, got {r}"
            )));
        }
        Ok(Self { rates, metadata })
    }

    /// Every rate equal to `rate`.
    pub fn constant(rate: f64) -> Result<Self> {
        let rates = Pollutant::ALL
            .iter()
            .flat_map(|&p| ALL_OPMODES.iter().map(move |&op| ((p, op), rate)))
            .collect();
        Self::new(rates, BTreeMap::new())
    }

    /// The bundled synthetic table. Not EPA data.
    pub fn synthetic() -> Self {
        Self::read_from(SYNTHETIC.as_bytes()).expect("bundled rate table is valid")
    }

    pub fn rate(&self, pollutant: Pollutant, opmode: OpModeId) -> f64 {
        self.rates[&(pollutant, opmode)]
    }

    pub fn rates(&self) -> &BTreeMap<(Pollutant, OpModeId), f64> {
        &self.rates
    }

    /// Reads CSV with header `pollutant,opModeID,rate_g_per_hr`. Leading
    /// lines starting with `#` are comments; `#key=value` lines are kept as
    /// metadata.
    pub fn read_from(reader: impl Read) -> Result<Self> {
        let mut reader = BufReader::new(reader);
        let mut metadata = BTreeMap::new();
        let mut body = String::new();
        let mut line = String::new();
        let mut skipped = 0;
        loop {
            line.clear();
            if reader
                .read_line(&mut line)
                .map_err(|e| Error::io("<rate table>", e))?
                == 0
            {
                break;
            }
            let Some(rest) = line.trim_end().strip_prefix('#') else {
                body.push_str(&line);
                break;
            };
            skipped += 1;
            if let Some((k, v)) = rest.split_once('=') {
                if !k.is_empty() && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    metadata.insert(k.to_string(), v.trim().to_string());
                }
            }
        }
        reader
            .read_to_string(&mut body)
            .map_err(|e| Error::io("<rate table>", e))?;

        let mut csv = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(body.as_bytes());
        let headers = csv.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Format {
                    line: skipped + 1,
                    column: 1,
                    message: format!("missing column {name:?}"),
                })
        };
        let (ip, io, ir) = (col("pollutant")?, col("opModeID")?, col("rate_g_per_hr")?);
        let mut rates = BTreeMap::new();
        for (i, record) in csv.records().enumerate() {
            let record = record?;
            let line = skipped + i + 2;
            let field = |c: usize| record.get(c).unwrap_or("");
            let bad = |c: usize, m: String| Error::Format {
                line,
                column: c + 1,
                message: m,
            };
            let p: Pollutant = field(ip)
                .parse()
                .map_err(|e: Error| bad(ip, e.to_string()))?;
            let op: OpModeId = field(io)
                .parse()
                .ok()
                .filter(|op| ALL_OPMODES.contains(op))
                .ok_or_else(|| bad(io, format!("unknown operating mode {:?}", field(io))))?;
            let r: f64 = field(ir)
                .parse()
                .ok()
                .filter(|r: &f64| *r >= 0.0 && r.is_finite())
                .ok_or_else(|| {
                    bad(
                        ir,
                        format!("rate must be a finite number >= 0, got {:?}", field(ir)),
                    )
                })?;
            if rates.insert((p, op), r).is_some() {
                return Err(bad(ip, format!("duplicate entry for {p}/{op}")));
            }
        }
        Self::new(rates, metadata)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(file)
    }
}
