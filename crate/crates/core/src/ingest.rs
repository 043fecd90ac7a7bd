//! Swap-event ingestion.
//!
//! Input is an exported event log, either CSV with the exact header
//! `block,timestamp,price` or `block,timestamp,price,fee`, or JSON lines with
//! the same keys. Prices are plain decimals (numéraire per risky unit); `fee`
//! is an optional LP fee quote in numéraire.
//!
//! Records are collapsed onto a contiguous block range. A block with several
//! swaps keeps only its closing price, so each block carries one price move
//! from the previous close, as in the single-trade model. Blocks without swaps
//! carry the price forward and pay no fee; they produce no fee observation.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::FeeObservation;
use crate::error::{Error, Result};
use crate::market_model::{check_positive, MarketParams};
use crate::pricing::block_fee_unchecked;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    JsonLines,
}

impl Format {
    /// `.jsonl`/`.ndjson`/`.json` select JSON lines; anything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "ndjson" | "json") => Format::JsonLines,
            _ => Format::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapRecord {
    #[serde(rename = "block")]
    pub block_index: u64,
    pub timestamp: i64,
    pub price: f64,
    #[serde(rename = "fee", default, skip_serializing_if = "Option::is_none")]
    pub fee_quote: Option<f64>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn validate(rec: &SwapRecord, prev_block: Option<u64>, line: usize) -> Result<()> {
    if !(rec.price > 0.0 && rec.price.is_finite()) {
        return Err(parse_err(
            line,
            format!("price must be positive, got {}", rec.price),
        ));
    }
    if let Some(f) = rec.fee_quote {
        if !(f >= 0.0 && f.is_finite()) {
            return Err(parse_err(
                line,
                format!("fee must be non-negative, got {f}"),
            ));
        }
    }
    if let Some(b) = prev_block {
        if rec.block_index < b {
            return Err(parse_err(
                line,
                format!("block {} follows block {b}", rec.block_index),
            ));
        }
    }
    Ok(())
}

/// Parses a swap export; line numbers in errors count the header as line 1.
pub fn parse_swaps<R: Read>(input: R, format: Format) -> Result<Vec<SwapRecord>> {
    match format {
        Format::Csv => parse_csv(input),
        Format::JsonLines => parse_json_lines(input),
    }
}

pub fn read_swaps(path: &Path) -> Result<Vec<SwapRecord>> {
    let file = std::fs::File::open(path)?;
    parse_swaps(std::io::BufReader::new(file), Format::from_path(path))
}

fn parse_csv<R: Read>(input: R) -> Result<Vec<SwapRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut rows = rdr.records();
    let header = match rows.next() {
        None => return Err(parse_err(1, "missing header")),
        Some(h) => h.map_err(|e| parse_err(1, e.to_string()))?,
    };
    let has_fee = match header.iter().collect::<Vec<_>>().as_slice() {
        ["block", "timestamp", "price"] => false,
        ["block", "timestamp", "price", "fee"] => true,
        other => {
            return Err(parse_err(
                1,
                format!(
                    "expected header block,timestamp,price[,fee], got {}",
                    other.join(",")
                ),
            ))
        }
    };
    let width = if has_fee { 4 } else { 3 };
    let mut out = Vec::new();
    let mut prev = None;
    for row in rows {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() != width {
            return Err(parse_err(
                line,
                format!("expected {width} columns, found {}", row.len()),
            ));
        }
        let field = |i: usize, name: &str| -> Result<&str> {
            let s = row[i].trim();
            if s.is_empty() {
                Err(parse_err(line, format!("missing {name}")))
            } else {
                Ok(s)
            }
        };
        let block_index = field(0, "block")?
            .parse::<u64>()
            .map_err(|e| parse_err(line, format!("block: {e}")))?;
        let timestamp = field(1, "timestamp")?
            .parse::<i64>()
            .map_err(|e| parse_err(line, format!("timestamp: {e}")))?;
        let price = field(2, "price")?
            .parse::<f64>()
            .map_err(|e| parse_err(line, format!("price: {e}")))?;
        let fee_quote = if has_fee && !row[3].trim().is_empty() {
            Some(
                row[3]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(line, format!("fee: {e}")))?,
            )
        } else {
            None
        };
        let rec = SwapRecord {
            block_index,
            timestamp,
            price,
            fee_quote,
        };
        validate(&rec, prev, line)?;
        prev = Some(block_index);
        out.push(rec);
    }
    Ok(out)
}

fn parse_json_lines<R: Read>(input: R) -> Result<Vec<SwapRecord>> {
    use std::io::BufRead;
    let mut out = Vec::new();
    let mut prev = None;
    for (i, line) in std::io::BufReader::new(input).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SwapRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(line_no, e.to_string()))?;
        validate(&rec, prev, line_no)?;
        prev = Some(rec.block_index);
        out.push(rec);
    }
    Ok(out)
}

/// Where a block's fee came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeeSource {
    /// No swap in the block.
    None,
    /// `γ̂·F(open, close)`.
    Model,
    /// Sum of the quoted fees in the block.
    Quoted,
}

/// Contiguous per-block series over an inclusive block range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockSeries {
    pub first_block: u64,
    /// Price at the open of the first block.
    pub open_price: f64,
    /// Closing price of each block.
    pub prices: Vec<f64>,
    pub swaps: Vec<bool>,
    pub fees: Vec<f64>,
    pub fee_sources: Vec<FeeSource>,
    /// Timestamp of the last swap in each block, if any.
    pub timestamps: Vec<Option<i64>>,
    /// Block interval in years.
    pub dt: f64,
    pub gamma: f64,
}

impl BlockSeries {
    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn last_block(&self) -> u64 {
        self.first_block + self.prices.len() as u64 - 1
    }

    /// Opening price of block offset `j`.
    pub fn block_open(&self, j: usize) -> f64 {
        if j == 0 {
            self.open_price
        } else {
            self.prices[j - 1]
        }
    }

    pub fn swap_count(&self) -> usize {
        self.swaps.iter().filter(|s| **s).count()
    }

    /// Opening price followed by every close, for the hedge backtester.
    pub fn price_path(&self) -> Vec<f64> {
        std::iter::once(self.open_price)
            .chain(self.prices.iter().copied())
            .collect()
    }

    /// Fees aligned with [`price_path`](Self::price_path).
    pub fn fee_path(&self) -> Vec<f64> {
        std::iter::once(0.0)
            .chain(self.fees.iter().copied())
            .collect()
    }

    /// Columns `block,timestamp,open,price,swap,fee,fee_source`; floats use the
    /// shortest representation that parses back to the same bits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Input(e.to_string());
        w.write_record([
            "block",
            "timestamp",
            "open",
            "price",
            "swap",
            "fee",
            "fee_source",
        ])
        .map_err(io)?;
        for j in 0..self.len() {
            let source = match self.fee_sources[j] {
                FeeSource::None => "none",
                FeeSource::Model => "model",
                FeeSource::Quoted => "quoted",
            };
            w.write_record([
                (self.first_block + j as u64).to_string(),
                self.timestamps[j]
                    .map(|t| t.to_string())
                    .unwrap_or_default(),
                self.block_open(j).to_string(),
                self.prices[j].to_string(),
                u8::from(self.swaps[j]).to_string(),
                self.fees[j].to_string(),
                source.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`write_csv`](Self::write_csv); Δt and γ come from `params`.
    pub fn read_csv<R: Read>(input: R, params: &MarketParams) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(input);
        let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?;
        if header.iter().collect::<Vec<_>>()
            != [
                "block",
                "timestamp",
                "open",
                "price",
                "swap",
                "fee",
                "fee_source",
            ]
        {
            return Err(parse_err(1, "not a block series header"));
        }
        let mut series = BlockSeries {
            first_block: 0,
            open_price: 0.0,
            prices: vec![],
            swaps: vec![],
            fees: vec![],
            fee_sources: vec![],
            timestamps: vec![],
            dt: params.dt(),
            gamma: params.gamma(),
        };
        for row in rdr.records() {
            let row = row.map_err(|e| parse_err(0, e.to_string()))?;
            let line = row.position().map_or(0, |p| p.line() as usize);
            let num = |i: usize| -> Result<f64> {
                row[i]
                    .parse()
                    .map_err(|e| parse_err(line, format!("column {i}: {e}")))
            };
            let block: u64 = row[0]
                .parse()
                .map_err(|e| parse_err(line, format!("block: {e}")))?;
            if series.prices.is_empty() {
                series.first_block = block;
                series.open_price = num(2)?;
            } else if block != series.last_block() + 1 {
                return Err(parse_err(line, "blocks must be contiguous"));
            }
            series.timestamps.push(if row[1].is_empty() {
                None
            } else {
                Some(
                    row[1]
                        .parse()
                        .map_err(|e| parse_err(line, format!("timestamp: {e}")))?,
                )
            });
            series.prices.push(num(3)?);
            series.swaps.push(&row[4] == "1");
            series.fees.push(num(5)?);
            series.fee_sources.push(match &row[6] {
                "none" => FeeSource::None,
                "model" => FeeSource::Model,
                "quoted" => FeeSource::Quoted,
                other => return Err(parse_err(line, format!("unknown fee source {other}"))),
            });
        }
        if series.prices.is_empty() {
            return Err(Error::InsufficientData("block series has no rows".into()));
        }
        Ok(series)
    }
}

/// Collapses sorted swap records onto the inclusive range `first..=last`.
///
/// Without `seed_price` the first block must contain a swap; its close
/// anchors the series and it is not counted as a swap block, since its open is
/// unknown. Quoted fees are used verbatim (summed within a block); otherwise the
/// model fee `γ̂·F(open, close)` is synthesized.
pub fn to_block_series(
    records: &[SwapRecord],
    block_range: (u64, u64),
    params: &MarketParams,
    seed_price: Option<f64>,
) -> Result<BlockSeries> {
    let (first, last) = block_range;
    if last < first {
        return Err(Error::Input(format!("empty block range {first}..={last}")));
    }
    if let Some(p) = seed_price {
        check_positive("seed price", p)?;
    }
    if let Some(w) = records
        .windows(2)
        .find(|w| w[1].block_index < w[0].block_index)
    {
        return Err(Error::Input(format!(
            "records are not sorted: block {} after {}",
            w[1].block_index, w[0].block_index
        )));
    }
    if let Some(r) = records
        .iter()
        .find(|r| r.block_index < first || r.block_index > last)
    {
        return Err(Error::Input(format!(
            "record at block {} lies outside {first}..={last}",
            r.block_index
        )));
    }
    let n = usize::try_from(last - first + 1)
        .map_err(|_| Error::Input("block range too large".into()))?;
    let gh = params.gamma_hat();

    let mut prices = Vec::with_capacity(n);
    let mut swaps = Vec::with_capacity(n);
    let mut fees = Vec::with_capacity(n);
    let mut fee_sources = Vec::with_capacity(n);
    let mut timestamps = Vec::with_capacity(n);

    let mut idx = 0;
    let mut open = seed_price;
    let mut anchor = None;
    for block in first..=last {
        let start = idx;
        while idx < records.len() && records[idx].block_index == block {
            idx += 1;
        }
        let in_block = &records[start..idx];
        let Some(close) = in_block.last() else {
            let Some(p) = open else {
                return Err(Error::Input(format!(
                    "no swap in first block {first} and no seed price"
                )));
            };
            prices.push(p);
            swaps.push(false);
            fees.push(0.0);
            fee_sources.push(FeeSource::None);
            timestamps.push(None);
            continue;
        };
        timestamps.push(Some(close.timestamp));
        prices.push(close.price);
        match open {
            None => {
                anchor = Some(close.price);
                swaps.push(false);
                fees.push(0.0);
                fee_sources.push(FeeSource::None);
            }
            Some(p_open) => {
                swaps.push(true);
                let quotes: Vec<f64> = in_block.iter().filter_map(|r| r.fee_quote).collect();
                if quotes.is_empty() {
                    fees.push(gh * block_fee_unchecked(p_open, close.price));
                    fee_sources.push(FeeSource::Model);
                } else {
                    fees.push(quotes.iter().sum());
                    fee_sources.push(FeeSource::Quoted);
                }
            }
        }
        open = Some(close.price);
    }
    Ok(BlockSeries {
        first_block: first,
        open_price: seed_price.or(anchor).expect("set above"),
        prices,
        swaps,
        fees,
        fee_sources,
        timestamps,
        dt: params.dt(),
        gamma: params.gamma(),
    })
}

/// One observation per swap block: the block-open price and the block fee.
pub fn observed_fees(series: &BlockSeries) -> Vec<FeeObservation> {
    (0..series.len())
        .filter(|&j| series.swaps[j])
        .map(|j| FeeObservation {
            prev_price: series.block_open(j),
            fee_paid: series.fees[j],
        })
        .collect()
}

/// Block range spanned by the records.
pub fn record_range(records: &[SwapRecord]) -> Option<(u64, u64)> {
    Some((records.first()?.block_index, records.last()?.block_index))
}
