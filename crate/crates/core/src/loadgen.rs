//! Retail payment load: who pays whom, how much, and when.
//!
//! Amount and scenario statistics follow the ECB SPACE 2022 survey of
//! non-recurring payments; rates are the 1:1000 scaled euro-area load.

use std::fmt;
use std::io::{Read, Write};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{NodeId, Role, Topology};
use crate::units::{Money, SimDuration, SimTime};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("invalid scenario table: {0}")]
    InvalidTable(String),
    #[error("invalid load profile: {0}")]
    InvalidProfile(String),
    #[error("topology cannot host the load: {0}")]
    UnsuitableTopology(String),
    #[error("request file: {0}")]
    Csv(#[from] csv::Error),
    #[error("request file line {line}: {message}")]
    BadRecord { line: u64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "POS")]
    Pos,
    Online,
    #[serde(rename = "P2P")]
    P2p,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Pos, Scenario::Online, Scenario::P2p];

    pub fn index(self) -> usize {
        match self {
            Scenario::Pos => 0,
            Scenario::Online => 1,
            Scenario::P2p => 2,
        }
    }

    pub fn pays_merchant(self) -> bool {
        !matches!(self, Scenario::P2p)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Pos => "POS",
            Scenario::Online => "Online",
            Scenario::P2p => "P2P",
        })
    }
}

/// Lower bounds (inclusive) of the seven amount bins, in cents: <5, [5,10),
/// [10,20), [20,30), [30,50), [50,100), >=100 euros.
pub const BIN_LOWER: [Money; 7] = [
    Money(1),
    Money(500),
    Money(1_000),
    Money(2_000),
    Money(3_000),
    Money(5_000),
    Money(10_000),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTable {
    /// POS, Online, P2P.
    pub scenario_shares: [f64; 3],
    /// Per-scenario bin probabilities, rows indexed like `scenario_shares`.
    pub bin_probs: [[f64; 7]; 3],
    /// Inclusive upper bound of the open-ended top bin.
    pub top_bin_max: Money,
    pub cross_border_prob: f64,
}

impl Default for ScenarioTable {
    fn default() -> Self {
        ScenarioTable {
            scenario_shares: [0.80, 0.17, 0.03],
            bin_probs: [
                [0.21, 0.17, 0.21, 0.13, 0.13, 0.10, 0.05],
                [0.10, 0.11, 0.20, 0.15, 0.17, 0.16, 0.11],
                [0.14, 0.11, 0.22, 0.16, 0.14, 0.11, 0.12],
            ],
            top_bin_max: Money::euros(1_000),
            cross_border_prob: 0.05,
        }
    }
}

impl ScenarioTable {
    /// Normalizes every row to sum to one and checks the bounds.
    pub fn normalized(mut self) -> Result<Self, LoadError> {
        fn norm(row: &mut [f64], name: &str) -> Result<(), LoadError> {
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(LoadError::InvalidTable(format!("{name}: probabilities must be finite and >= 0")));
            }
            let s: f64 = row.iter().sum();
            if s <= 0.0 {
                return Err(LoadError::InvalidTable(format!("{name}: row sums to zero")));
            }
            row.iter_mut().for_each(|p| *p /= s);
            Ok(())
        }
        norm(&mut self.scenario_shares, "scenario_shares")?;
        for (i, row) in self.bin_probs.iter_mut().enumerate() {
            norm(row, &format!("bin_probs[{i}]"))?;
        }
        if !(0.0..=1.0).contains(&self.cross_border_prob) {
            return Err(LoadError::InvalidTable(format!(
                "cross_border_prob must lie in [0, 1], got {}",
                self.cross_border_prob
            )));
        }
        if self.top_bin_max < BIN_LOWER[6] {
            return Err(LoadError::InvalidTable(format!(
                "top_bin_max {} is below the top bin's lower bound {}",
                self.top_bin_max, BIN_LOWER[6]
            )));
        }
        Ok(self)
    }

    /// Half-open `[lo, hi)` cent range of bin `i`.
    pub fn bin_range(&self, i: usize) -> (Money, Money) {
        let hi = if i + 1 < BIN_LOWER.len() { BIN_LOWER[i + 1] } else { self.top_bin_max + Money(1) };
        (BIN_LOWER[i], hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrivalProcess {
    Poisson,
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadSegment {
    pub start: SimTime,
    pub end: SimTime,
    /// Payments per second.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    segments: Vec<LoadSegment>,
    pub arrival: ArrivalProcess,
}

impl LoadProfile {
    pub fn new(segments: Vec<LoadSegment>, arrival: ArrivalProcess) -> Result<Self, LoadError> {
        if segments.is_empty() {
            return Err(LoadError::InvalidProfile("no segments".into()));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.rate.is_finite() && s.rate > 0.0) {
                return Err(LoadError::InvalidProfile(format!("segment {i}: rate must be positive")));
            }
            if s.end <= s.start {
                return Err(LoadError::InvalidProfile(format!("segment {i}: end must follow start")));
            }
            if i > 0 && s.start < segments[i - 1].end {
                return Err(LoadError::InvalidProfile(format!("segment {i} overlaps or precedes segment {}", i - 1)));
            }
        }
        Ok(LoadProfile { segments, arrival })
    }

    /// A profile that generates nothing.
    pub fn idle() -> Self {
        LoadProfile { segments: Vec::new(), arrival: ArrivalProcess::Deterministic }
    }

    pub fn segments(&self) -> &[LoadSegment] {
        &self.segments
    }

    pub fn end(&self) -> SimTime {
        self.segments.last().map_or(SimTime::ZERO, |s| s.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    /// 2 payments/s for 24 hours.
    AverageDay,
    /// 2 payments/s, rising to 20 between 7h and 19h.
    PeakDay,
}

pub fn build_profile(kind: ProfileKind, arrival: ArrivalProcess) -> LoadProfile {
    let h = |x: u64| SimTime::from_secs(x * 3600);
    let segments = match kind {
        ProfileKind::AverageDay => vec![LoadSegment { start: h(0), end: h(24), rate: 2.0 }],
        ProfileKind::PeakDay => vec![
            LoadSegment { start: h(0), end: h(7), rate: 2.0 },
            LoadSegment { start: h(7), end: h(19), rate: 20.0 },
            LoadSegment { start: h(19), end: h(24), rate: 2.0 },
        ],
    };
    LoadProfile::new(segments, arrival).expect("built-in profiles are valid")
}

pub fn next_interarrival<R: Rng>(rate: f64, arrival: ArrivalProcess, rng: &mut R) -> SimDuration {
    match arrival {
        ArrivalProcess::Deterministic => SimDuration::from_secs_f64(1.0 / rate),
        ArrivalProcess::Poisson => {
            let exp = Exp::new(rate).expect("rate is positive");
            SimDuration::from_secs_f64(exp.sample(rng))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentRequest {
    pub id: u64,
    pub sender: NodeId,
    pub receiver: NodeId,
    pub amount: Money,
    pub scenario: Scenario,
    pub cross_border: bool,
    pub created_at: SimTime,
}

/// End users of a topology indexed by role and country, for fast sampling.
#[derive(Debug, Clone)]
pub struct EndUserDirectory {
    citizens: Vec<NodeId>,
    citizens_by_country: Vec<Vec<NodeId>>,
    merchants_by_country: Vec<Vec<NodeId>>,
    country_of: Vec<u16>,
}

impl EndUserDirectory {
    pub fn new(t: &Topology) -> Result<Self, LoadError> {
        let nc = t.num_countries();
        let mut d = EndUserDirectory {
            citizens: Vec::new(),
            citizens_by_country: vec![Vec::new(); nc],
            merchants_by_country: vec![Vec::new(); nc],
            country_of: t.nodes.iter().map(|n| n.country).collect(),
        };
        for n in &t.nodes {
            match n.role {
                Role::Citizen => {
                    d.citizens.push(n.id);
                    d.citizens_by_country[n.country as usize].push(n.id);
                }
                Role::Merchant(_) => d.merchants_by_country[n.country as usize].push(n.id),
                _ => {}
            }
        }
        for c in 0..nc {
            if d.citizens_by_country[c].is_empty() || d.merchants_by_country[c].is_empty() {
                return Err(LoadError::UnsuitableTopology(format!(
                    "country {c} needs at least one citizen and one merchant"
                )));
            }
        }
        Ok(d)
    }

    pub fn num_countries(&self) -> usize {
        self.citizens_by_country.len()
    }
}

/// Draws the amount: a bin by the scenario's row, then a uniform cent value in it.
pub fn sample_amount<R: Rng>(scenario: Scenario, table: &ScenarioTable, rng: &mut R) -> Money {
    let row = &table.bin_probs[scenario.index()];
    let bin = WeightedIndex::new(row).expect("normalized table").sample(rng);
    let (lo, hi) = table.bin_range(bin);
    Money(rng.gen_range(lo.0..hi.0))
}

/// Draws one retail payment. The sender is a uniformly chosen citizen; a
/// P2P draw in a country where the sender is the only citizen falls back to a
/// merchant receiver.
pub fn sample_payment<R: Rng>(
    table: &ScenarioTable,
    dir: &EndUserDirectory,
    id: u64,
    now: SimTime,
    rng: &mut R,
) -> PaymentRequest {
    let sender = dir.citizens[rng.gen_range(0..dir.citizens.len())];
    let scenario = Scenario::ALL[WeightedIndex::new(table.scenario_shares).expect("normalized").sample(rng)];
    let home = dir.country_of[sender.index()] as usize;
    let nc = dir.num_countries();
    let country = if nc > 1 && rng.gen_bool(table.cross_border_prob) {
        let k = rng.gen_range(0..nc - 1);
        if k >= home {
            k + 1
        } else {
            k
        }
    } else {
        home
    };
    let citizens = &dir.citizens_by_country[country];
    let p2p_possible = citizens.len() > 1 || citizens.first() != Some(&sender);
    let receiver = if scenario.pays_merchant() || !p2p_possible {
        let m = &dir.merchants_by_country[country];
        m[rng.gen_range(0..m.len())]
    } else {
        // Uniform over the country's citizens other than the sender.
        let skip = citizens.binary_search(&sender).ok();
        let n = citizens.len() - usize::from(skip.is_some());
        let mut k = rng.gen_range(0..n);
        if let Some(s) = skip {
            if k >= s {
                k += 1;
            }
        }
        citizens[k]
    };
    let scenario = if scenario == Scenario::P2p && !p2p_possible { Scenario::Pos } else { scenario };
    let amount = sample_amount(scenario, table, rng);
    PaymentRequest { id, sender, receiver, amount, scenario, cross_border: country != home, created_at: now }
}

/// Lazily generated request stream for a whole load profile.
pub struct RequestStream<'a> {
    table: &'a ScenarioTable,
    dir: &'a EndUserDirectory,
    profile: &'a LoadProfile,
    rng: ChaCha8Rng,
    segment: usize,
    next_time: Option<SimTime>,
    next_id: u64,
    emitted_in_segment: u64,
}

impl<'a> RequestStream<'a> {
    pub fn new(table: &'a ScenarioTable, dir: &'a EndUserDirectory, profile: &'a LoadProfile, seed: u64) -> Self {
        let mut s = RequestStream {
            table,
            dir,
            profile,
            rng: ChaCha8Rng::seed_from_u64(seed),
            segment: 0,
            next_time: None,
            next_id: 0,
            emitted_in_segment: 0,
        };
        s.next_time = s.first_arrival(0);
        s
    }

    fn first_arrival(&mut self, seg: usize) -> Option<SimTime> {
        let s = self.profile.segments.get(seg)?;
        Some(match self.profile.arrival {
            ArrivalProcess::Deterministic => s.start,
            ArrivalProcess::Poisson => s.start + next_interarrival(s.rate, ArrivalProcess::Poisson, &mut self.rng),
        })
    }
}

impl Iterator for RequestStream<'_> {
    type Item = PaymentRequest;

    fn next(&mut self) -> Option<PaymentRequest> {
        loop {
            let seg = *self.profile.segments.get(self.segment)?;
            let t = self.next_time?;
            if t >= seg.end {
                self.segment += 1;
                self.emitted_in_segment = 0;
                self.next_time = self.first_arrival(self.segment);
                continue;
            }
            let req = sample_payment(self.table, self.dir, self.next_id, t, &mut self.rng);
            self.next_id += 1;
            self.emitted_in_segment += 1;
            self.next_time = Some(match self.profile.arrival {
                // Exact multiples of the period avoid drift from rounding each gap.
                ArrivalProcess::Deterministic => {
                    seg.start + SimDuration::from_secs_f64(self.emitted_in_segment as f64 / seg.rate)
                }
                ArrivalProcess::Poisson => t + next_interarrival(seg.rate, ArrivalProcess::Poisson, &mut self.rng),
            });
            return Some(req);
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    id: u64,
    time_s: String,
    sender: u32,
    receiver: u32,
    amount_cents: u64,
    scenario: Scenario,
    cross_border: bool,
}

/// Writes requests as CSV with header
/// `id,time_s,sender,receiver,amount_cents,scenario,cross_border`.
pub fn write_requests_csv<W: Write>(w: W, reqs: impl IntoIterator<Item = PaymentRequest>) -> Result<(), LoadError> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in reqs {
        let us = r.created_at.as_micros();
        wtr.serialize(CsvRow {
            id: r.id,
            time_s: format!("{}.{:06}", us / 1_000_000, us % 1_000_000),
            sender: r.sender.0,
            receiver: r.receiver.0,
            amount_cents: r.amount.0,
            scenario: r.scenario,
            cross_border: r.cross_border,
        })?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn parse_time_s(s: &str) -> Option<SimTime> {
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    if frac.len() > 6 || !frac.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let secs: u64 = whole.parse().ok()?;
    let micros: u64 = if frac.is_empty() { 0 } else { format!("{frac:0<6}").parse().ok()? };
    Some(SimTime(secs.checked_mul(1_000_000)?.checked_add(micros)?))
}

/// Reads a request file written by [`write_requests_csv`]; rows must be in
/// nondecreasing time order.
pub fn read_requests_csv<R: Read>(r: R) -> Result<Vec<PaymentRequest>, LoadError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out: Vec<PaymentRequest> = Vec::new();
    for row in rdr.deserialize::<CsvRow>() {
        let row = row?;
        let line = out.len() as u64 + 2;
        let created_at = parse_time_s(&row.time_s)
            .ok_or_else(|| LoadError::BadRecord { line, message: format!("bad time_s {:?}", row.time_s) })?;
        if out.last().is_some_and(|p| p.created_at > created_at) {
            return Err(LoadError::BadRecord { line, message: "time goes backwards".into() });
        }
        if row.amount_cents == 0 || row.sender == row.receiver {
            return Err(LoadError::BadRecord { line, message: "amount must be positive and sender != receiver".into() });
        }
        out.push(PaymentRequest {
            id: row.id,
            sender: NodeId(row.sender),
            receiver: NodeId(row.receiver),
            amount: Money(row.amount_cents),
            scenario: row.scenario,
            cross_border: row.cross_border,
            created_at,
        });
    }
    Ok(out)
}
