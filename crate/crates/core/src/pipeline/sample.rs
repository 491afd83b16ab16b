use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::domain::TrialRecord;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SampleError {
    #[error("asked for {wanted} records but only {available} are available")]
    TooFew { wanted: usize, available: usize },
    #[error("class {class} has {available} member(s), quota is {quota}")]
    InsufficientClass { class: u8, quota: usize, available: usize },
}

/// Per-class quotas for `n` draws: `floor(n·p_c)` each, then the leftover
/// slots go to the largest fractional remainders, ties to the lower class.
pub fn class_quotas(counts: &BTreeMap<u8, usize>, n: usize) -> BTreeMap<u8, usize> {
    let total: usize = counts.values().sum();
    if total == 0 {
        return counts.keys().map(|c| (*c, 0)).collect();
    }
    // n·count/total as integer quotient and remainder keeps the comparison exact.
    let mut quotas: BTreeMap<u8, usize> = counts.iter().map(|(c, k)| (*c, n * k / total)).collect();
    let assigned: usize = quotas.values().sum();
    let mut order: Vec<(u8, usize)> = counts.iter().map(|(c, k)| (*c, n * k % total)).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    for (class, _) in order.into_iter().take(n - assigned) {
        *quotas.get_mut(&class).expect("known class") += 1;
    }
    quotas
}

/// Label-stratified sample of `n` records, returned in NCT order.
///
/// Within a class the draw is a seeded uniform choice over the class
/// members sorted by NCT id, so the result depends only on the record set,
/// `n` and `seed`.
pub fn stratified_sample(records: &[TrialRecord], n: usize, seed: u64) -> Result<Vec<TrialRecord>, SampleError> {
    if n > records.len() {
        return Err(SampleError::TooFew {
            wanted: n,
            available: records.len(),
        });
    }
    let mut by_class: BTreeMap<u8, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        by_class.entry(r.label).or_default().push(r);
    }
    let counts: BTreeMap<u8, usize> = by_class.iter().map(|(c, v)| (*c, v.len())).collect();
    let quotas = class_quotas(&counts, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for (class, members) in &mut by_class {
        let quota = quotas[class];
        if quota > members.len() {
            return Err(SampleError::InsufficientClass {
                class: *class,
                quota,
                available: members.len(),
            });
        }
        members.sort_by(|a, b| a.nct_id.cmp(&b.nct_id));
        out.extend(members.choose_multiple(&mut rng, quota).map(|r| (*r).clone()));
    }
    out.sort_by(|a, b| a.nct_id.cmp(&b.nct_id));
    Ok(out)
}
