//! The LLM detection protocol: per-disk point sampling, host-patch
//! prompt construction under a token budget, verdict parsing, and a
//! pluggable transport.
//!
//! Only the deterministic mock transport ships here; a live client can
//! implement [`Transport`] and slot in unchanged. The prompt demands one
//! `cluster/host/disk: T|F` line per disk so responses parse uniformly.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::model::{DailyWindow, Date, DiskId, FaultLabel, Sample, Verdict};
use crate::rng::Rng;

/// Protocol parameters.
#[derive(Debug, Clone)]
pub struct LlmConfig {
    pub hosts_per_patch: usize,
    pub samples_per_disk: usize,
    pub context_budget_tokens: usize,
    pub seed: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            hosts_per_patch: 50,
            samples_per_disk: 20,
            context_budget_tokens: 128_000,
            seed: 0,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hosts_per_patch < 1 || self.samples_per_disk < 1 {
            return Err(Error::Config(
                "hosts_per_patch and samples_per_disk must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// A request/response channel to some language model.
pub trait Transport {
    fn complete(&self, prompt: &str) -> Result<String>;
}

/// Uniform sample of `n` points without replacement, order preserved;
/// returns the whole window when it has at most `n` samples.
pub fn sample_points(window: &DailyWindow, n: usize, seed: u64) -> Vec<Sample> {
    let samples = window.samples();
    if samples.len() <= n {
        return samples.to_vec();
    }
    let mut rng = Rng::new(seed).derive(&format!("sample/{}/{}", window.id, window.date));
    rng.sample_indices(samples.len(), n)
        .into_iter()
        .map(|i| samples[i])
        .collect()
}

/// One disk's sampled points, ready for prompt rendering.
#[derive(Debug, Clone)]
pub struct PatchEntry {
    pub id: DiskId,
    pub points: Vec<Sample>,
}

/// Builds one patch (disk -> sampled points) from a fleet's windows for
/// a single date, honoring hosts_per_patch.
pub fn build_patches(
    windows: &[DailyWindow],
    config: &LlmConfig,
) -> Result<Vec<Vec<PatchEntry>>> {
    config.validate()?;
    if windows.is_empty() {
        return Err(Error::EmptyInput("no windows to patch"));
    }
    let mut hosts: BTreeMap<(char, String), Vec<&DailyWindow>> = BTreeMap::new();
    for w in windows {
        hosts
            .entry((w.id.cluster, w.id.host.clone()))
            .or_default()
            .push(w);
    }
    let host_groups: Vec<Vec<&DailyWindow>> = hosts.into_values().collect();
    Ok(host_groups
        .chunks(config.hosts_per_patch)
        .map(|chunk| {
            chunk
                .iter()
                .flat_map(|group| {
                    group.iter().map(|w| PatchEntry {
                        id: w.id.clone(),
                        points: sample_points(w, config.samples_per_disk, config.seed),
                    })
                })
                .collect()
        })
        .collect())
}

const PROMPT_HEADER: &str = "\
You are monitoring cloud storage telemetry for fail-slow disks. Each line \
below lists one disk's sampled latency (ms) and throughput (MB/s) readings \
from the daily collection window. A fail-slow disk shows consistently \
higher latency than its host peers or recurrent abnormal latency spikes.

Data:
";

const PROMPT_CONTRACT: &str = "\nOutput format: one line per disk, exactly \
`cluster/host/disk: T` for a fail-slow disk or `cluster/host/disk: F` for a \
healthy one. No other text.\n";

fn fmt_series(values: impl Iterator<Item = f64>) -> String {
    let parts: Vec<String> = values.map(|v| format!("{v:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Renders the prompt for one patch and estimates its token count as
/// ceil(chars / 4). Errs when the estimate exceeds the budget.
pub fn build_prompt(patch: &[PatchEntry], config: &LlmConfig) -> Result<(String, usize)> {
    if patch.is_empty() {
        return Err(Error::EmptyInput("empty patch"));
    }
    let mut prompt = String::from(PROMPT_HEADER);
    for entry in patch {
        let lat = fmt_series(entry.points.iter().map(|s| s.latency_ms));
        let tp = fmt_series(entry.points.iter().map(|s| s.throughput_mbps));
        prompt.push_str(&format!("{}: lat={lat}, tp={tp}\n", entry.id));
    }
    prompt.push_str(PROMPT_CONTRACT);
    let estimate = prompt.chars().count().div_ceil(4);
    if estimate > config.context_budget_tokens {
        return Err(Error::OverBudget {
            estimate,
            budget: config.context_budget_tokens,
        });
    }
    Ok((prompt, estimate))
}

/// Parsed verdicts plus protocol warnings.
#[derive(Debug, Clone)]
pub struct ParsedVerdicts {
    pub labels: Vec<FaultLabel>,
    /// Disks missing from the response (defaulted to F).
    pub missing: Vec<DiskId>,
    /// Response lines naming disks outside the expected set (ignored).
    pub unknown: Vec<String>,
}

/// Parses `cluster/host/disk: T|F` lines tolerantly (whitespace, case).
/// Expected disks missing from the response are labeled F with a
/// warning; unknown disks are ignored with a warning. A response with
/// no parseable line at all is a protocol error.
pub fn parse_verdicts(
    response: &str,
    expected: &[DiskId],
    date: Date,
) -> Result<ParsedVerdicts> {
    let expected_set: BTreeMap<&DiskId, ()> = expected.iter().map(|d| (d, ())).collect();
    let mut verdicts: BTreeMap<DiskId, Verdict> = BTreeMap::new();
    let mut unknown = Vec::new();
    for raw in response.lines() {
        let line = raw.trim();
        let Some((id_part, verdict_part)) = line.split_once(':') else {
            continue;
        };
        let Ok(id) = id_part.trim().parse::<DiskId>() else {
            continue;
        };
        let Ok(verdict) = verdict_part.trim().parse::<Verdict>() else {
            continue;
        };
        if expected_set.contains_key(&id) {
            verdicts.insert(id, verdict);
        } else {
            unknown.push(line.to_string());
        }
    }
    if verdicts.is_empty() && unknown.is_empty() {
        return Err(Error::Protocol(format!(
            "no parseable verdict lines in a {}-char response",
            response.len()
        )));
    }
    let mut labels = Vec::with_capacity(expected.len());
    let mut missing = Vec::new();
    for id in expected {
        let verdict = match verdicts.get(id) {
            Some(v) => *v,
            None => {
                missing.push(id.clone());
                Verdict::F
            }
        };
        labels.push(FaultLabel {
            id: id.clone(),
            date,
            verdict,
            score: if verdict == Verdict::T { 1.0 } else { 0.0 },
        });
    }
    Ok(ParsedVerdicts {
        labels,
        missing,
        unknown,
    })
}

/// A deterministic transport that answers from a planted verdict plan,
/// rendered in the output contract. Counts calls.
pub struct MockTransport {
    plan: BTreeMap<DiskId, Verdict>,
    calls: AtomicUsize,
}

impl MockTransport {
    pub fn new(plan: BTreeMap<DiskId, Verdict>) -> Self {
        MockTransport {
            plan,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for MockTransport {
    fn complete(&self, prompt: &str) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        // Answer only for disks that actually appear in the prompt.
        let mut out = String::new();
        for (id, verdict) in &self.plan {
            if prompt.contains(&format!("{id}: lat=")) {
                out.push_str(&format!("{id}: {verdict}\n"));
            }
        }
        Ok(out)
    }
}

/// Full protocol run: patch the fleet, prompt the transport per patch,
/// parse all verdicts. Deterministic given (windows, config, transport).
pub fn detect_with_llm<T: Transport>(
    windows: &[DailyWindow],
    date: Date,
    config: &LlmConfig,
    transport: &T,
) -> Result<ParsedVerdicts> {
    let patches = build_patches(windows, config)?;
    let mut labels = Vec::new();
    let mut missing = Vec::new();
    let mut unknown = Vec::new();
    for patch in &patches {
        let (prompt, _estimate) = build_prompt(patch, config)?;
        let response = transport.complete(&prompt)?;
        let expected: Vec<DiskId> = patch.iter().map(|e| e.id.clone()).collect();
        let parsed = parse_verdicts(&response, &expected, date)?;
        labels.extend(parsed.labels);
        missing.extend(parsed.missing);
        unknown.extend(parsed.unknown);
    }
    Ok(ParsedVerdicts {
        labels,
        missing,
        unknown,
    })
}
