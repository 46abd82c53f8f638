//! Exhaustive structural checks over freshly generated keys.
//!
//! Used by the `entcf-check` command. Each check enumerates the whole domain
//! and, for the Ideal backend, the whole image space.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{chk, dot, gen_keypair, Backend, EntcfParams, Family, Image, PublicKey, Result, Trapdoor};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub cases: u64,
    pub failures: u64,
    pub first_failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub params: EntcfParams,
    pub keys_per_family: usize,
    pub checks: Vec<CheckOutcome>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.failures == 0)
    }
}

struct Tally {
    outcome: CheckOutcome,
}

impl Tally {
    fn new(name: &str) -> Self {
        Self {
            outcome: CheckOutcome {
                name: name.to_string(),
                cases: 0,
                failures: 0,
                first_failure: None,
            },
        }
    }

    fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.outcome.cases += 1;
        if !ok {
            self.outcome.failures += 1;
            if self.outcome.first_failure.is_none() {
                self.outcome.first_failure = Some(detail());
            }
        }
    }
}

fn range(key: &PublicKey, b: u8) -> Result<BTreeSet<Image>> {
    let mut out = BTreeSet::new();
    for x in 0..key.params().domain_size() {
        out.extend(key.support(b, x)?);
    }
    Ok(out)
}

/// Images worth probing: both ranges plus, for Ideal keys, every unused
/// image in the space.
fn probe_images(key: &PublicKey) -> Result<BTreeSet<Image>> {
    let mut out = range(key, 0)?;
    out.extend(range(key, 1)?);
    if key.params().backend == Backend::Ideal {
        out.extend(0..key.params().image_space_size);
    }
    Ok(out)
}

/// Runs every structural check on `keys` freshly generated keys per family.
pub fn run(params: &EntcfParams, keys: usize, seed: u64) -> Result<SuiteReport> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matching = Tally::new("claw matching (F)");
    let mut equal_ranges = Tally::new("range equality (F)");
    let mut disjoint = Tally::new("range disjointness (G)");
    let mut injective = Tally::new("supports disjoint across x");
    let mut chk_membership = Tally::new("CHK agrees with support membership");
    let mut inversion = Tally::new("decode_b / decode_x invert evaluation");
    let mut off_range = Tally::new("off-range images decode to bottom");
    let mut hardcore = Tally::new("decode_h equals d·s");
    let mut encoding = Tally::new("key encoding round trip, family-blind length");

    let domain = params.domain_size();
    let mut lengths = BTreeSet::new();
    for _ in 0..keys {
        for family in [Family::F, Family::G] {
            let (key, td) = gen_keypair(family, params, &mut rng)?;
            let bytes = key.to_bytes();
            lengths.insert(bytes.len());
            encoding.record(PublicKey::from_bytes(&bytes).as_ref() == Ok(&key), || {
                format!("{family:?} key did not survive encoding")
            });
            let r0 = range(&key, 0)?;
            let r1 = range(&key, 1)?;
            for b in 0..2u8 {
                let mut seen = BTreeSet::new();
                let mut total = 0;
                for x in 0..domain {
                    let s = key.support(b, x)?;
                    total += s.len();
                    seen.extend(s);
                }
                injective.record(seen.len() == total, || {
                    format!("{family:?} key: supports of f_{b} overlap")
                });
            }
            match family {
                Family::F => {
                    let s = td.claw_shift().unwrap_or(0);
                    matching.record(s != 0 && s < domain, || format!("claw shift {s}"));
                    for x in 0..domain {
                        let ok = key.support(1, x)? == key.support(0, x ^ s)?;
                        matching.record(ok, || format!("x={x}: f1(x) and f0(x^s) differ"));
                    }
                    equal_ranges.record(r0 == r1, || "ranges of f0 and f1 differ".into());
                    check_f_decoding(&key, &td, &mut inversion, &mut hardcore)?;
                }
                Family::G => {
                    disjoint.record(r0.is_disjoint(&r1), || "ranges intersect".into());
                    check_g_decoding(&key, &td, &mut inversion)?;
                }
            }
            for y in probe_images(&key)? {
                let in_range = r0.contains(&y) || r1.contains(&y);
                if !in_range {
                    let ok = match family {
                        Family::G => td.decode_b(y)?.is_none(),
                        Family::F => (1..domain).all(|d| matches!(td.decode_h(y, d), Ok(None))),
                    } && td.decode_x(Some(0), y).is_none()
                        && td.decode_x(Some(1), y).is_none();
                    off_range.record(ok, || format!("image {y} off range but decodes"));
                }
                for b in 0..2u8 {
                    for x in 0..domain {
                        let member = key.support(b, x)?.binary_search(&y).is_ok();
                        let c = chk(std::slice::from_ref(&key), &[y], &[b], &[x])?;
                        chk_membership.record((c == 0) == member, || {
                            format!("y={y} b={b} x={x}: chk={c} member={member}")
                        });
                    }
                }
            }
        }
    }
    encoding.record(lengths.len() == 1, || format!("encoding lengths {lengths:?}"));

    Ok(SuiteReport {
        params: *params,
        keys_per_family: keys,
        checks: [
            matching,
            equal_ranges,
            disjoint,
            injective,
            chk_membership,
            inversion,
            off_range,
            hardcore,
            encoding,
        ]
        .into_iter()
        .map(|t| t.outcome)
        .collect(),
    })
}

fn check_g_decoding(key: &PublicKey, td: &Trapdoor, tally: &mut Tally) -> Result<()> {
    for b in 0..2u8 {
        for x in 0..key.params().domain_size() {
            for y in key.support(b, x)? {
                let ok = td.decode_b(y)? == Some(b) && td.decode_x(Some(b), y) == Some(x);
                tally.record(ok, || format!("G key: y={y} from (b={b}, x={x})"));
            }
        }
    }
    Ok(())
}

fn check_f_decoding(
    key: &PublicKey,
    td: &Trapdoor,
    inversion: &mut Tally,
    hardcore: &mut Tally,
) -> Result<()> {
    let s = td.claw_shift().unwrap_or(0);
    for b in 0..2u8 {
        for x in 0..key.params().domain_size() {
            for y in key.support(b, x)? {
                inversion.record(td.decode_x(Some(b), y) == Some(x), || {
                    format!("F key: y={y} from (b={b}, x={x})")
                });
                inversion.record(td.decode_x(None, y).is_none(), || "decode_x(⊥) defined".into());
                if b == 0 {
                    hardcore.record(td.decode_h(y, 0)?.is_none(), || "d = 0 decodes".into());
                    for d in 1..key.params().domain_size() {
                        let h = td.decode_h(y, d)?;
                        hardcore.record(h == Some(dot(d, s)), || {
                            format!("y={y} d={d}: got {h:?}, want {}", dot(d, s))
                        });
                    }
                }
            }
        }
    }
    Ok(())
}
