//! Deposit, withdrawal and swap formulas against plain integer arithmetic
//! over every value in 0..=100.

use shpcn_core::rebalancer::{
    plan_withdrawal, reverse_trigger, swap_amount, swap_needed, waterfall_deposit_amount, waterfall_trigger,
    withdrawal_amount,
};
use shpcn_core::Money;

const N: i64 = 100;

fn m(x: i64) -> Money {
    Money(x as u64)
}

#[test]
fn deposit_formula_exhaustive() {
    let mut checked = 0u64;
    for c in 0..=N {
        for b in 0..=c {
            for p in 1..=N {
                let triggered = waterfall_trigger(m(b), m(p), m(c));
                assert_eq!(triggered, b + p > c);
                if !triggered {
                    continue;
                }
                for ld in 0..=N {
                    let d = waterfall_deposit_amount(m(b), m(p), m(c), m(ld)).0 as i64;
                    let raw = (b + p - c).max(ld);
                    assert_eq!(d, raw.min(b), "B={b} P={p} C={c} L_D={ld}");
                    // Whenever the payment fits the cap at all, the deposit
                    // leaves room for it.
                    if p <= c {
                        assert!(b - d + p <= c, "B={b} P={p} C={c} L_D={ld}");
                    }
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 1_000_000);
}

#[test]
fn withdrawal_formula_exhaustive() {
    for b in 0..=N {
        for p in 0..=N {
            assert_eq!(reverse_trigger(m(b), m(p)), b < p);
            for lw in 0..=N {
                let w = withdrawal_amount(m(b), m(p), m(lw)).0 as i64;
                assert_eq!(w, (lw - b).max(p - b).max(0), "B={b} P={p} L_W={lw}");
            }
        }
    }
}

#[test]
fn withdrawal_clamp_exhaustive() {
    for c in 0..=N {
        for b in 0..=c {
            for p in (b + 1)..=N {
                for lw in (0..=N).step_by(5) {
                    let got = plan_withdrawal(m(b), m(p), m(c), m(lw));
                    if p > c {
                        assert!(got.is_err(), "B={b} P={p} C={c}");
                        continue;
                    }
                    let w = got.unwrap().0 as i64;
                    assert_eq!(w, (lw - b).max(p - b).min(c - b));
                    assert!(b + w <= c && b + w >= p);
                }
            }
        }
    }
}

#[test]
fn swap_formula_exhaustive() {
    for (threshold, pct) in [(0.55, 55), (0.8, 80), (0.9, 90), (1.0, 100)] {
        for cap in 0..=N {
            for bal in 0..=cap {
                assert_eq!(swap_needed(m(bal), m(cap), threshold), bal * 100 > pct * cap, "{bal}/{cap} at {threshold}");
                let a = swap_amount(m(bal), m(cap)).0 as i64;
                assert_eq!(a, (bal - cap / 2).max(0));
            }
        }
    }
}
