//! Verdict clauses and the Σ(θ, v) sets.
//!
//! Everything here is a pure function of decoded values, so the analyzer and
//! the verifier share one implementation of each clause. Coordinates are
//! 0-based in code; `Theta::Coord(t)` names coordinate t − 1.

use serde::{Deserialize, Serialize};

use super::{ProtocolKind, Result, Theta};
use crate::entcf::{Family, Image, Trapdoor};

/// Trapdoor decodings of one image tuple (and, in a Hadamard round, of d).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decoded {
    /// b̂(k_i, y_i) for injective keys; ⊥ for claw-free keys and off-range y.
    pub b: Vec<Option<u8>>,
    /// ĥ(k_i, y_i, d_i) for claw-free keys; ⊥ for injective keys, d_i = 0 or off-range y.
    pub h: Vec<Option<u8>>,
    /// y_i lies in the range of f_{k_i,0} or f_{k_i,1}.
    pub valid: Vec<bool>,
}

impl Decoded {
    pub fn new(trapdoors: &[Trapdoor], y: &[Image], d: Option<&[u32]>) -> Result<Self> {
        let width = trapdoors.len();
        if y.len() != width || d.is_some_and(|d| d.len() != width) {
            return Err(super::ProtocolError::Malformed("tuple length".into()));
        }
        let mut out = Decoded {
            b: vec![None; width],
            h: vec![None; width],
            valid: vec![false; width],
        };
        for (i, td) in trapdoors.iter().enumerate() {
            match td.family() {
                Family::G => {
                    out.b[i] = td.decode_b(y[i])?;
                    out.valid[i] = out.b[i].is_some();
                }
                Family::F => {
                    out.valid[i] = td.claw(y[i]).is_some();
                    if let Some(d) = d {
                        out.h[i] = td.decode_h(y[i], d[i])?;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Every coordinate decodes (the "valid y" condition).
    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Verdict {
    pub accept: bool,
    pub reason: String,
}

impl Verdict {
    pub fn accept(reason: impl Into<String>) -> Self {
        Self {
            accept: true,
            reason: reason.into(),
        }
    }

    pub fn reject(reason: impl Into<String>) -> Self {
        Self {
            accept: false,
            reason: reason.into(),
        }
    }
}

/// The partner coordinate mod(i + N, 2N), 0-based.
pub fn modp(i: usize, n: usize) -> usize {
    if i < n {
        i + n
    } else {
        i - n
    }
}

/// First index in `indices` whose b̂ is ⊥ or differs from v.
fn b_clause(dec: &Decoded, v: &[u8], indices: impl IntoIterator<Item = usize>) -> Option<&'static str> {
    for i in indices {
        match dec.b[i] {
            None => return Some("b_undefined"),
            Some(b) if b != v[i] => return Some("b_mismatch"),
            Some(_) => {}
        }
    }
    None
}

/// ĥ_t ⊕ b̂_p = v_t.
fn equation_clause(dec: &Decoded, v: &[u8], t: usize, p: usize) -> Option<&'static str> {
    let Some(h) = dec.h[t] else {
        return Some("h_undefined");
    };
    let Some(b) = dec.b[p] else {
        return Some("b_undefined");
    };
    (h ^ b != v[t]).then_some("equation")
}

fn verdict(case: char, q: u8, failure: Option<&'static str>) -> Verdict {
    match failure {
        None => Verdict::accept(format!("{case}.q{q}.accept")),
        Some(clause) => Verdict::reject(format!("{case}.q{q}.{clause}")),
    }
}

/// Hadamard-round verdict of the self-test for question q. `v` must have
/// length 2N and `dec` must come from the session's trapdoors.
pub fn selftest_hadamard_check(n: usize, theta: Theta, q: u8, dec: &Decoded, v: &[u8]) -> Verdict {
    let all = 0..2 * n;
    let low = 0..n;
    let high = n..2 * n;
    match theta {
        Theta::Coord(t) if t <= n => {
            let t = t - 1;
            let fail = match q {
                0 => b_clause(dec, v, all.filter(|&i| i != t)),
                1 => equation_clause(dec, v, t, t + n),
                2 => b_clause(dec, v, low.filter(|&i| i != t)),
                _ => b_clause(dec, v, high).or_else(|| equation_clause(dec, v, t, t + n)),
            };
            verdict('A', q, fail)
        }
        Theta::Coord(t) => {
            let t = t - 1;
            let fail = match q {
                0 => b_clause(dec, v, all.filter(|&i| i != t)),
                1 => equation_clause(dec, v, t, t - n),
                2 => b_clause(dec, v, low).or_else(|| equation_clause(dec, v, t, t - n)),
                _ => b_clause(dec, v, high.filter(|&i| i != t)),
            };
            verdict('B', q, fail)
        }
        Theta::Zero => match q {
            0 => verdict('C', q, b_clause(dec, v, all)),
            1 => Verdict::accept("C.q1.unconditional"),
            2 => verdict('C', q, b_clause(dec, v, low)),
            _ => verdict('C', q, b_clause(dec, v, high)),
        },
        Theta::Diamond => match q {
            0 | 1 => Verdict::accept(format!("D.q{q}.unconditional")),
            _ => {
                // q = 2 reads ĥ of the upper coordinate, q = 3 the lower one
                let mut fail = None;
                for i in 0..n {
                    let src = if q == 2 { n + i } else { i };
                    match dec.h[src] {
                        None => fail = Some("h_undefined"),
                        Some(h) if v[i] ^ v[n + i] != h => fail = Some("equation"),
                        Some(_) => continue,
                    }
                    break;
                }
                verdict('D', q, fail)
            }
        },
    }
}

/// Hadamard-round verdict of the dimension test (v has length N).
pub fn dimtest_check(n: usize, theta: Theta, q: u8, dec: &Decoded, v: &[u8]) -> Verdict {
    match theta {
        Theta::Zero => match q {
            0 => verdict('A', q, b_clause(dec, v, 0..n)),
            _ => Verdict::accept("A.q1.unconditional"),
        },
        Theta::Coord(t) => {
            let t = t - 1;
            let fail = match q {
                0 => b_clause(dec, v, (0..n).filter(|&i| i != t)),
                _ => match dec.h[t] {
                    None => Some("h_undefined"),
                    Some(h) => (h != v[t]).then_some("equation"),
                },
            };
            verdict('B', q, fail)
        }
        Theta::Diamond => Verdict::reject("protocol"),
    }
}

/// (y, d) ∈ Σ(θ, v) for the self-test, read directly off the set definition.
pub fn selftest_sigma_membership(n: usize, theta: Theta, v: &[u8], dec: &Decoded) -> bool {
    let eq = |a: Option<u8>, b: u8| a == Some(b);
    match theta {
        Theta::Coord(t) => {
            let t = t - 1;
            (0..2 * n).filter(|&i| i != t).all(|i| eq(dec.b[i], v[i]))
                && eq(dec.h[t], v[t] ^ v[modp(t, n)])
        }
        Theta::Zero => (0..2 * n).all(|i| eq(dec.b[i], v[i])),
        Theta::Diamond => (0..2 * n).all(|i| eq(dec.h[i], v[modp(i, n)])),
    }
}

/// The unique v with (y, d) ∈ Σ(θ, v), if any.
pub fn selftest_v_star(n: usize, theta: Theta, dec: &Decoded) -> Option<Vec<u8>> {
    match theta {
        Theta::Coord(t) => {
            let t = t - 1;
            let mut v = vec![0u8; 2 * n];
            for i in (0..2 * n).filter(|&i| i != t) {
                v[i] = dec.b[i]?;
            }
            v[t] = dec.h[t]? ^ v[modp(t, n)];
            Some(v)
        }
        Theta::Zero => dec.b.iter().copied().collect(),
        Theta::Diamond => (0..2 * n).map(|j| dec.h[modp(j, n)]).collect(),
    }
}

/// (y, d) ∈ Σ(θ, v) for the dimension test: the analogue with
/// b̂_i = v_i off θ and ĥ_θ = v_θ.
pub fn dimtest_sigma_membership(n: usize, theta: Theta, v: &[u8], dec: &Decoded) -> bool {
    match theta {
        Theta::Coord(t) => {
            let t = t - 1;
            (0..n).filter(|&i| i != t).all(|i| dec.b[i] == Some(v[i])) && dec.h[t] == Some(v[t])
        }
        Theta::Zero => (0..n).all(|i| dec.b[i] == Some(v[i])),
        Theta::Diamond => false,
    }
}

pub fn dimtest_v_star(n: usize, theta: Theta, dec: &Decoded) -> Option<Vec<u8>> {
    match theta {
        Theta::Coord(t) => (0..n)
            .map(|i| if i == t - 1 { dec.h[i] } else { dec.b[i] })
            .collect(),
        Theta::Zero => dec.b.iter().copied().collect(),
        Theta::Diamond => None,
    }
}

pub fn sigma_membership(kind: ProtocolKind, n: usize, theta: Theta, v: &[u8], dec: &Decoded) -> bool {
    match kind {
        ProtocolKind::SelfTest => selftest_sigma_membership(n, theta, v, dec),
        ProtocolKind::DimTest => dimtest_sigma_membership(n, theta, v, dec),
    }
}

pub fn v_star(kind: ProtocolKind, n: usize, theta: Theta, dec: &Decoded) -> Option<Vec<u8>> {
    match kind {
        ProtocolKind::SelfTest => selftest_v_star(n, theta, dec),
        ProtocolKind::DimTest => dimtest_v_star(n, theta, dec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dec(b: &[Option<u8>], h: &[Option<u8>]) -> Decoded {
        Decoded {
            b: b.to_vec(),
            h: h.to_vec(),
            valid: vec![true; b.len()],
        }
    }

    #[test]
    fn case_c_checks_every_coordinate_on_q0() {
        let d = dec(&[Some(1), Some(0)], &[None, None]);
        assert!(selftest_hadamard_check(1, Theta::Zero, 0, &d, &[1, 0]).accept);
        let r = selftest_hadamard_check(1, Theta::Zero, 0, &d, &[1, 1]);
        assert_eq!(r, Verdict::reject("C.q0.b_mismatch"));
    }

    #[test]
    fn case_a_equation_uses_partner_bit() {
        // N = 1, θ = 1: ĥ_1 ⊕ b̂_2 = v_1
        let d = dec(&[None, Some(1)], &[Some(0), None]);
        assert!(selftest_hadamard_check(1, Theta::Coord(1), 1, &d, &[1, 0]).accept);
        let r = selftest_hadamard_check(1, Theta::Coord(1), 1, &d, &[0, 0]);
        assert_eq!(r.reason, "A.q1.equation");
        let undefined = dec(&[None, Some(1)], &[None, None]);
        let r = selftest_hadamard_check(1, Theta::Coord(1), 1, &undefined, &[1, 0]);
        assert_eq!(r.reason, "A.q1.h_undefined");
    }

    #[test]
    fn modp_pairs_halves() {
        assert_eq!(modp(0, 2), 2);
        assert_eq!(modp(3, 2), 1);
    }
}
