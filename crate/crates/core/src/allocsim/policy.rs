use serde::{Deserialize, Serialize};

use super::scorer::{Oracle, Scorer};
use super::stream::{DonorArrival, EventStream};
use super::{Fate, LedgerRow, SimConfig, SimReport};
use crate::metrics::flipped_ratio;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// Earliest-arriving waiting recipient.
    Fcfs,
    /// Highest predicted outcome.
    Uf,
    /// Highest predicted outcome minus untreated survival remaining.
    Bf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Policy {
    /// The donor goes to its factual partner if that recipient still waits.
    Real,
    Plain(Rule),
    /// Candidates restricted to recipients whose predicted best type equals
    /// the donor's type, falling back to everyone when none qualify.
    Guided(Rule),
}

impl Policy {
    pub const TABLE: [Policy; 7] = [
        Policy::Real,
        Policy::Plain(Rule::Fcfs),
        Policy::Plain(Rule::Uf),
        Policy::Plain(Rule::Bf),
        Policy::Guided(Rule::Fcfs),
        Policy::Guided(Rule::Uf),
        Policy::Guided(Rule::Bf),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Real => "real",
            Policy::Plain(Rule::Fcfs) => "fcfs",
            Policy::Plain(Rule::Uf) => "uf",
            Policy::Plain(Rule::Bf) => "bf",
            Policy::Guided(Rule::Fcfs) => "matching-rep-fcfs",
            Policy::Guided(Rule::Uf) => "matching-rep-uf",
            Policy::Guided(Rule::Bf) => "matching-rep-bf",
        }
    }

    pub fn needs_scorer(self) -> bool {
        matches!(self, Policy::Plain(Rule::Uf | Rule::Bf) | Policy::Guided(_))
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::TABLE
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown policy `{s}`")))
    }
}

impl TryFrom<String> for Policy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Policy> for String {
    fn from(p: Policy) -> String {
        p.name().to_string()
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A recipient on the waitlist.
#[derive(Clone, Debug, PartialEq)]
pub struct WaitlistEntry {
    pub recipient: usize,
    pub arrival: usize,
    pub remaining: f64,
}

/// Index into `waitlist` of the chosen recipient, or `None` to discard the
/// donor. `waitlist` is in arrival order, which breaks every tie.
pub fn policy_select(
    policy: Policy,
    waitlist: &[WaitlistEntry],
    donor: &DonorArrival,
    scorer: Option<&Scorer>,
    factual: Option<&[usize]>,
) -> Result<Option<usize>> {
    if waitlist.is_empty() {
        return Ok(None);
    }
    let (rule, candidates): (Rule, Vec<usize>) = match policy {
        Policy::Real => {
            let factual = factual.ok_or_else(|| {
                Error::Config("the real policy needs the factual donor-recipient map".into())
            })?;
            let partner = factual[donor.id];
            return Ok(waitlist.iter().position(|e| e.recipient == partner));
        }
        Policy::Plain(rule) => (rule, (0..waitlist.len()).collect()),
        Policy::Guided(rule) => {
            let (potentials, donor_types) = scorer.ok_or_else(missing_scorer)?.types()?;
            let k = donor_types[donor.id];
            let restricted: Vec<usize> = (0..waitlist.len())
                .filter(|&i| Scorer::best_type(potentials, waitlist[i].recipient) == k)
                .collect();
            let all = if restricted.is_empty() {
                (0..waitlist.len()).collect()
            } else {
                restricted
            };
            (rule, all)
        }
    };
    if rule == Rule::Fcfs {
        return Ok(candidates.first().copied());
    }
    let scorer = scorer.ok_or_else(missing_scorer)?;
    let ids: Vec<usize> = candidates.iter().map(|&i| waitlist[i].recipient).collect();
    let scores = scorer.scores(&ids, donor.id)?;
    let mut best: Option<(f64, usize)> = None;
    for (&i, s) in candidates.iter().zip(scores) {
        let v = match rule {
            Rule::Bf => s - waitlist[i].remaining,
            _ => s,
        };
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, i));
        }
    }
    Ok(best.map(|(_, i)| i))
}

fn missing_scorer() -> Error {
    Error::Config("this policy needs a scorer".into())
}

/// Replays `stream` under `policy`. Within a step, arrivals join the
/// waitlist before donors are allocated; after the step every waiting
/// recipient's remaining untreated survival drops by `days_per_step` and
/// those reaching zero die. The run ends after the last arrival.
pub fn run_policy(
    stream: &EventStream,
    policy: Policy,
    scorer: Option<&Scorer>,
    oracle: &Oracle,
    config: &SimConfig,
) -> Result<SimReport> {
    config.validate()?;
    if policy.needs_scorer() && scorer.is_none() {
        return Err(missing_scorer());
    }
    if policy == Policy::Real && stream.factual.is_none() {
        return Err(Error::Config("the real policy needs the factual donor-recipient map".into()));
    }
    let n = stream.recipients.len();
    let mut ledger: Vec<LedgerRow> = stream
        .recipients
        .iter()
        .map(|r| LedgerRow {
            recipient_id: r.id,
            arrival: r.step,
            fate: Fate::Waiting,
            step_of_fate: None,
            donor_id: None,
            realized_survival: None,
            benefit: None,
        })
        .collect();
    let slot: std::collections::HashMap<usize, usize> =
        stream.recipients.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
    let mut waitlist: Vec<WaitlistEntry> = Vec::new();
    let (mut next_r, mut next_d) = (0, 0);
    let last = stream.last_step().unwrap_or(0);
    for step in 0..=last {
        while next_r < n && stream.recipients[next_r].step == step {
            let r = &stream.recipients[next_r];
            waitlist.push(WaitlistEntry {
                recipient: r.id,
                arrival: r.step,
                remaining: r.untreated_survival,
            });
            next_r += 1;
        }
        while next_d < stream.donors.len() && stream.donors[next_d].step == step {
            let donor = &stream.donors[next_d];
            next_d += 1;
            if let Some(i) = policy_select(policy, &waitlist, donor, scorer, stream.factual.as_deref())? {
                let entry = waitlist.remove(i);
                let survival = oracle.realised(entry.recipient, donor.id);
                let row = &mut ledger[slot[&entry.recipient]];
                row.fate = Fate::Transplanted;
                row.step_of_fate = Some(step);
                row.donor_id = Some(donor.id);
                row.realized_survival = Some(survival);
                row.benefit = Some(survival - entry.remaining);
            }
        }
        if step == last {
            break;
        }
        waitlist.retain_mut(|e| {
            e.remaining -= config.days_per_step;
            if e.remaining <= 0.0 {
                let row = &mut ledger[slot[&e.recipient]];
                row.fate = Fate::Dead;
                row.step_of_fate = Some(step);
                false
            } else {
                true
            }
        });
    }
    let flipped = match (&oracle.recipient_types, &stream.factual) {
        (Some(types), Some(factual)) => {
            let mut original = vec![None; oracle.potentials.len()];
            for (d, &r) in factual.iter().enumerate() {
                original[r] = Some(oracle.donor_types[d]);
            }
            let mut new = vec![None; oracle.potentials.len()];
            for row in &ledger {
                new[row.recipient_id] = row.donor_id.map(|d| oracle.donor_types[d]);
            }
            flipped_ratio(&original, &new, types, 0, 0)?
        }
        _ => None,
    };
    Ok(SimReport::from_ledger(
        policy.name(),
        policy.needs_scorer().then(|| scorer.map(|s| s.name().to_string())).flatten(),
        ledger,
        flipped,
    ))
}
