//! Segmented, exact computation of the generalized divisor function d_k.
//!
//! A block [lo, hi] is sieved by dividing out every prime p <= sqrt(hi)
//! from a cofactor array: the exponent a of p contributes the factor
//! binomial(a+k-1, k-1), and a cofactor still exceeding 1 at the end is a
//! single prime with exponent 1. All counts and sums are integers; nothing
//! in this module rounds.

use crate::{LabError, Result};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

pub const MIN_K: u32 = 2;
pub const MAX_K: u32 = 8;
/// Largest block a single sieve call will allocate (entries).
pub const MAX_BLOCK_LEN: u64 = 1 << 24;
/// Resource caps for summatory computation.
pub const MAX_SUMMATORY_X_K2: u64 = 2_000_000_000;
pub const MAX_SUMMATORY_X_K3_PLUS: u64 = 200_000_000;
/// Chunk length used when a long range is split into parallel blocks.
const PIPELINE_CHUNK: u64 = 1 << 22;

/// d_k over a contiguous range, `values[i] = d_k(lo + i)`.
#[derive(Debug)]
pub struct DkBlock {
    pub k: u32,
    pub lo: u64,
    pub hi: u64,
    pub values: Vec<u64>,
}

pub(crate) fn validate_k(k: u32) -> Result<()> {
    if !(MIN_K..=MAX_K).contains(&k) {
        return Err(LabError::Validation(format!(
            "k must lie in [{MIN_K}, {MAX_K}], got {k}"
        )));
    }
    Ok(())
}

pub(crate) fn summatory_cap(k: u32) -> u64 {
    if k == 2 {
        MAX_SUMMATORY_X_K2
    } else {
        MAX_SUMMATORY_X_K3_PLUS
    }
}

/// Primes <= n by a plain Eratosthenes sieve (n stays ~1e6 in practice).
pub fn primes_up_to(n: u64) -> Vec<u64> {
    if n < 2 {
        return Vec::new();
    }
    let n = n as usize;
    let mut composite = vec![false; n + 1];
    let mut primes = Vec::new();
    for p in 2..=n {
        if !composite[p] {
            primes.push(p as u64);
            let mut m = p * p;
            while m <= n {
                composite[m] = true;
                m += p;
            }
        }
    }
    primes
}

/// binomial(a + k - 1, k - 1) = d_k(p^a), tabulated for a <= 63.
fn prime_power_table(k: u32) -> [u64; 64] {
    let mut t = [0u64; 64];
    for (a, slot) in t.iter_mut().enumerate() {
        let mut v: u128 = 1;
        for i in 1..=(k - 1) as u128 {
            v = v * (a as u128 + i) / i;
        }
        *slot = v as u64;
    }
    t
}

/// Ordered k-tuple count with product n, by recursive divisor enumeration.
///
/// Independent of the sieve route; used as its oracle. Memoization inside a
/// single call keeps the recursion polynomial without changing the route.
pub fn brute_force_dk(k: u32, n: u64) -> Result<u64> {
    validate_k(k)?;
    if n == 0 {
        return Err(LabError::Validation("n must be positive".into()));
    }
    if n > 1_000_000 {
        return Err(LabError::Resource(format!(
            "brute-force oracle is capped at n <= 1e6, got {n}"
        )));
    }
    fn divisors(n: u64) -> Vec<u64> {
        let mut small = Vec::new();
        let mut large = Vec::new();
        let mut d = 1;
        while d * d <= n {
            if n % d == 0 {
                small.push(d);
                if d * d != n {
                    large.push(n / d);
                }
            }
            d += 1;
        }
        large.reverse();
        small.extend(large);
        small
    }
    fn go(k: u32, n: u64, memo: &mut HashMap<(u32, u64), u64>) -> u64 {
        if k == 1 {
            return 1;
        }
        if let Some(&v) = memo.get(&(k, n)) {
            return v;
        }
        let v = divisors(n).iter().map(|&d| go(k - 1, d, memo)).sum();
        memo.insert((k, n), v);
        v
    }
    Ok(go(k, n, &mut HashMap::new()))
}

/// Exact d_k values over [lo, hi].
pub fn sieve_dk_block(k: u32, lo: u64, hi: u64) -> Result<DkBlock> {
    validate_k(k)?;
    if lo == 0 || hi < lo {
        return Err(LabError::Validation(format!(
            "need 1 <= lo <= hi, got lo={lo} hi={hi}"
        )));
    }
    let len = hi - lo + 1;
    if len > MAX_BLOCK_LEN {
        return Err(LabError::Resource(format!(
            "block of {len} entries exceeds the {MAX_BLOCK_LEN}-entry guard"
        )));
    }
    let len = len as usize;
    let pp = prime_power_table(k);
    let mut values = vec![1u64; len];
    let mut remaining: Vec<u64> = (lo..=hi).collect();
    for p in primes_up_to(hi.isqrt()) {
        let mut m = lo.div_ceil(p) * p;
        while m <= hi {
            let i = (m - lo) as usize;
            let mut a = 0usize;
            while remaining[i] % p == 0 {
                remaining[i] /= p;
                a += 1;
            }
            values[i] *= pp[a];
            m += p;
        }
    }
    for i in 0..len {
        if remaining[i] > 1 {
            values[i] *= k as u64; // d_k(p) = k
        }
    }
    Ok(DkBlock { k, lo, hi, values })
}

/// Splits [lo, hi] into pipeline chunks at fixed absolute boundaries.
fn chunk_ranges(lo: u64, hi: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut a = lo;
    while a <= hi {
        let b = hi.min((a / PIPELINE_CHUNK + 1) * PIPELINE_CHUNK - 1);
        out.push((a, b));
        a = b + 1;
    }
    out
}

fn sum_range(k: u32, lo: u64, hi: u64, workers: usize) -> Result<i128> {
    if lo > hi {
        return Ok(0);
    }
    let chunks = chunk_ranges(lo, hi);
    let partials: Vec<Result<i128>> = crate::with_pool(workers, || {
        chunks
            .par_iter()
            .map(|&(a, b)| {
                let block = sieve_dk_block(k, a, b)?;
                Ok(block.values.iter().map(|&v| v as i128).sum())
            })
            .collect()
    });
    let mut total: i128 = 0;
    for p in partials {
        total += p?;
    }
    Ok(total)
}

/// Exact summatory sum of d_k(n) for n <= x.
pub fn summatory_dk(k: u32, x: u64, workers: usize) -> Result<i128> {
    validate_k(k)?;
    if x == 0 {
        return Err(LabError::Validation("x must be positive".into()));
    }
    let cap = summatory_cap(k);
    if x > cap {
        return Err(LabError::Resource(format!(
            "summatory x={x} exceeds the configured maximum {cap} for k={k}"
        )));
    }
    sum_range(k, 1, x, workers)
}

/// Summatory sum resuming from (and recording into) a checkpoint store.
pub fn summatory_dk_cached(
    k: u32,
    x: u64,
    workers: usize,
    store: &CheckpointStore,
) -> Result<i128> {
    validate_k(k)?;
    if x == 0 {
        return Err(LabError::Validation("x must be positive".into()));
    }
    let cap = summatory_cap(k);
    if x > cap {
        return Err(LabError::Resource(format!(
            "summatory x={x} exceeds the configured maximum {cap} for k={k}"
        )));
    }
    let (base_x, base_sum) = store.best_at_most(k, x).unwrap_or((0, 0));
    let total = base_sum + sum_range(k, base_x + 1, x, workers)?;
    store.record(k, x, total);
    store.flush()?;
    Ok(total)
}

/// Exact sum of d_k(n) over the window x < n <= x + h.
pub fn interval_sum_dk(k: u32, x: u64, h: u64, workers: usize) -> Result<i128> {
    validate_k(k)?;
    let cap = summatory_cap(k);
    if x + h > cap {
        return Err(LabError::Resource(format!(
            "interval end {} exceeds the configured maximum {cap} for k={k}",
            x + h
        )));
    }
    sum_range(k, x + 1, x + h, workers)
}

/// Plain-text checkpoint records `k,x,sum`, sorted by (k, x).
pub struct CheckpointStore {
    path: PathBuf,
    map: Mutex<BTreeMap<(u32, u64), i128>>,
}

impl CheckpointStore {
    /// File name inside the cache directory.
    pub const FILE_NAME: &'static str = "dk_checkpoints.csv";

    /// Opens (creating the directory if needed) and loads existing records.
    pub fn open(cache_dir: &Path) -> Result<CheckpointStore> {
        std::fs::create_dir_all(cache_dir)
            .map_err(|e| LabError::Resource(format!("cache dir {cache_dir:?}: {e}")))?;
        let path = cache_dir.join(Self::FILE_NAME);
        let mut map = BTreeMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| LabError::Resource(format!("reading {path:?}: {e}")))?;
            for (ln, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let mut parts = line.split(',').map(str::trim);
                let (k, x, sum) = match (
                    parts.next().and_then(|s| s.parse::<u32>().ok()),
                    parts.next().and_then(|s| s.parse::<u64>().ok()),
                    parts.next().and_then(|s| s.parse::<i128>().ok()),
                ) {
                    (Some(k), Some(x), Some(s)) => (k, x, s),
                    _ => {
                        return Err(LabError::Validation(format!(
                            "malformed checkpoint at {path:?}:{}",
                            ln + 1
                        )))
                    }
                };
                map.insert((k, x), sum);
            }
        }
        Ok(CheckpointStore { path, map: Mutex::new(map) })
    }

    /// Greatest recorded checkpoint at or below x for this k.
    pub fn best_at_most(&self, k: u32, x: u64) -> Option<(u64, i128)> {
        let map = self.map.lock().expect("checkpoint lock");
        map.range((k, 1)..=(k, x)).next_back().map(|(&(_, cx), &s)| (cx, s))
    }

    pub fn record(&self, k: u32, x: u64, sum: i128) {
        let mut map = self.map.lock().expect("checkpoint lock");
        map.insert((k, x), sum);
    }

    /// Rewrites the file, records sorted by (k, x).
    pub fn flush(&self) -> Result<()> {
        let map = self.map.lock().expect("checkpoint lock");
        let tmp = self.path.with_extension("csv.tmp");
        let mut out = Vec::new();
        for (&(k, x), &sum) in map.iter() {
            writeln!(out, "{k},{x},{sum}").expect("write to vec");
        }
        std::fs::write(&tmp, out)
            .and_then(|_| std::fs::rename(&tmp, &self.path))
            .map_err(|e| LabError::Resource(format!("writing {:?}: {e}", self.path)))
    }
}
