//! Independent reference values: Pigou closed forms, exhaustive pure-Nash
//! search for tiny games, and a network with discontinuous costs on which no
//! equilibrium exists.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::kernel::{enumerate_pure_paths, Policy, Scenario};
use crate::net::{CongestionFn, LinkId};
use crate::nplayer::{assign_players, simulate, PlayerSpec, SimMode, Strategy};
use crate::scenarios::{self, PigouVariant};

/// Largest number of pure profiles [`brute_force_nash`] accepts by default.
pub const NASH_PROFILE_BUDGET: usize = 1_000_000;

/// Share of the population on the congestible Pigou link at equilibrium,
/// from `c(x) = c'(x)` with `c` constant and `c'` affine.
pub fn pigou_mf_equilibrium(variant: PigouVariant) -> f64 {
    let (fixed, congestible) = variant.congestion();
    let (CongestionFn::Constant { t0: c }, CongestionFn::Affine { t0, alpha }) = (fixed, congestible) else {
        unreachable!("Pigou links are constant and affine");
    };
    if alpha == 0.0 {
        return if t0 < c { 1.0 } else { 0.0 };
    }
    ((c - t0) / alpha).clamp(0.0, 1.0)
}

/// Travel time of either Pigou link at the mean-field equilibrium.
pub fn pigou_equilibrium_cost(variant: PigouVariant) -> f64 {
    let (_, congestible) = variant.congestion();
    congestible
        .evaluate(pigou_mf_equilibrium(variant))
        .expect("equilibrium share lies in [0, 1]")
}

fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// `(1/(N 2^N)) Σ_{m=1}^{N} C(N-1, m) max{N/2 - m - 1, m + 1 - N/2}`, the
/// Pigou deviation-incentive formula per unit of `T`, in exact arithmetic.
pub fn pigou_deviation_formula_rational(n: u64) -> BigRational {
    assert!(n >= 1, "need at least one player");
    let half_n = BigRational::new(BigInt::from(n), BigInt::from(2));
    let mut sum = BigRational::zero();
    for m in 1..=n {
        let mf = BigRational::from_integer(BigInt::from(m));
        let one = BigRational::one();
        let left = &half_n - &mf - &one;
        let right = &mf + &one - &half_n;
        let term = if left > right { left } else { right };
        sum += BigRational::from_integer(binomial(n - 1, m)) * term;
    }
    sum / BigRational::from_integer(BigInt::from(n) * (BigInt::one() << n))
}

/// Pigou deviation-incentive formula for horizon `t`.
pub fn pigou_deviation_formula(n: u64, t: f64) -> f64 {
    t * pigou_deviation_formula_rational(n).to_f64().expect("finite rational")
}

/// Deviation incentive of the even-split policy on the `c = T/2`,
/// `c' = xT` Pigou network, per unit of `T`, by summing over the number of
/// opponents that pick the congestible link.
pub fn pigou_even_split_incentive_rational(n: u64) -> BigRational {
    assert!(n >= 1, "need at least one player");
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let weight = BigRational::new(BigInt::one(), BigInt::one() << (n - 1));
    let mut congestible = BigRational::zero();
    for k in 0..n {
        let cost = BigRational::new(BigInt::from(k + 1), BigInt::from(n));
        congestible += BigRational::from_integer(binomial(n - 1, k)) * &weight * cost;
    }
    let on_policy = (&half + &congestible) * &half;
    let best = if congestible < half { congestible } else { half };
    on_policy - best
}

/// The even split over both Pigou links from the origin.
pub fn pigou_even_split_policy(scenario: &Scenario) -> Result<Policy> {
    let mut policy = Policy::uniform(scenario);
    for atom in &scenario.atoms {
        let n = scenario.network.successors(atom.origin).len();
        if n != 2 {
            return Err(Error::Config("not a two-link Pigou network".into()));
        }
        for t in 0..scenario.grid.n_ticks {
            policy.set_row(t, atom.origin, atom.destination, &[0.5, 0.5])?;
        }
    }
    Ok(policy)
}

/// Result of enumerating every pure path profile of a small game.
#[derive(Clone, Debug)]
pub struct NashEnumeration {
    pub players: Vec<PlayerSpec>,
    /// Candidate paths of each player.
    pub paths: Vec<Vec<Vec<LinkId>>>,
    /// Profiles (one path index per player) where no single player can
    /// lower its own cost by switching path.
    pub equilibria: Vec<Vec<usize>>,
    /// Profile with the smallest largest unilateral gain, and that gain.
    pub minimax: (Vec<usize>, f64),
}

/// Exhaustive pure-Nash search using the event simulator.
pub fn brute_force_nash(scenario: &Scenario, n: usize, path_budget: usize) -> Result<NashEnumeration> {
    let players = assign_players(scenario, n)?;
    let mut paths = Vec::with_capacity(n);
    for p in &players {
        let atom = &scenario.atoms[p.atom];
        let ps = enumerate_pure_paths(
            &scenario.network,
            atom.origin,
            atom.destination,
            &scenario.grid,
            scenario.grid.n_ticks,
        )?;
        if ps.is_empty() {
            return Err(Error::Config(format!("no path for demand atom {}", p.atom)));
        }
        paths.push(ps);
    }
    let radix: Vec<usize> = paths.iter().map(|p| p.len()).collect();
    let total = radix
        .iter()
        .try_fold(1usize, |acc, &r| acc.checked_mul(r).filter(|&x| x <= path_budget))
        .ok_or_else(|| Error::Size(format!("more than {path_budget} pure profiles")))?;

    let decode = |mut code: usize| -> Vec<usize> {
        radix
            .iter()
            .map(|&r| {
                let d = code % r;
                code /= r;
                d
            })
            .collect()
    };
    let encode = |profile: &[usize]| -> usize {
        profile.iter().zip(&radix).rev().fold(0, |acc, (&d, &r)| acc * r + d)
    };

    let mut costs = Vec::with_capacity(total);
    for code in 0..total {
        let profile = decode(code);
        let strategies: Vec<Strategy> = profile
            .iter()
            .enumerate()
            .map(|(i, &k)| Strategy::Path(&paths[i][k]))
            .collect();
        costs.push(simulate(scenario, &players, &strategies, SimMode::Event, 0, 0)?);
    }

    let mut equilibria = Vec::new();
    let mut minimax = (Vec::new(), f64::INFINITY);
    for code in 0..total {
        let profile = decode(code);
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for k in 0..radix[i] {
                let mut other = profile.clone();
                other[i] = k;
                worst = worst.max(costs[code][i] - costs[encode(&other)][i]);
            }
        }
        if worst <= 1e-12 {
            equilibria.push(profile.clone());
        }
        if worst < minimax.1 {
            minimax = (profile, worst);
        }
    }
    Ok(NashEnumeration {
        players,
        paths,
        equilibria,
        minimax,
    })
}

/// Two parallel links with `c(μ) = 1` for `μ < 0.5` and `c'(μ) = 1` for
/// `μ ≤ 0.5`, both 2 otherwise. Every split leaves some vehicles on the
/// slower link, so no equilibrium exists.
pub fn discontinuous_pigou_scenario() -> Result<Scenario> {
    scenarios::two_link(
        CongestionFn::step(1.0, 2.0, 0.5, false),
        CongestionFn::step(1.0, 2.0, 0.5, true),
        0.01,
        3.0,
    )
}

/// Outcome of one named consistency check.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> OracleCheck {
    OracleCheck {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Runs every cross-check between closed forms, enumeration and the
/// simulators. Used by the `oracle-check` command.
pub fn run_checks() -> Result<Vec<OracleCheck>> {
    let mut out = Vec::new();

    for variant in [PigouVariant::Classic, PigouVariant::HorizonScaled { t: 2.0 }] {
        let x = pigou_mf_equilibrium(variant);
        let c = pigou_equilibrium_cost(variant);
        let expect_cost = match variant {
            PigouVariant::Classic => 2.0,
            PigouVariant::HorizonScaled { t } => 0.5 * t,
        };
        out.push(check(
            &format!("pigou equilibrium split {variant:?}"),
            x == 0.5 && c == expect_cost,
            format!("split {x}, cost {c}"),
        ));
    }

    let f2 = pigou_deviation_formula(2, 2.0);
    out.push(check("formula N=2 T=2", f2 == 0.25, format!("{f2}")));
    let lin = (1..=12).all(|n| {
        let a = pigou_deviation_formula(n, 2.0);
        let b = 2.0 * pigou_deviation_formula(n, 1.0);
        (a - b).abs() <= 1e-15
    });
    out.push(check("formula linear in T", lin, String::new()));
    let tail: Vec<f64> = [10, 100, 1000].iter().map(|&n| pigou_deviation_formula(n, 2.0)).collect();
    out.push(check(
        "formula decreasing in N",
        tail[0] > tail[1] && tail[1] > tail[2] && tail[2] > 0.0,
        format!("{tail:?}"),
    ));

    let scenario = scenarios::pigou(PigouVariant::HorizonScaled { t: 2.0 }, 0.01, 3.0)?;
    let policy = pigou_even_split_policy(&scenario)?;
    for n in 1..=10u64 {
        let sim = crate::nplayer::deviation_incentive_exact(&scenario, &policy, n as usize, SimMode::Event)?;
        let closed = 2.0 * pigou_even_split_incentive_rational(n).to_f64().unwrap_or(f64::NAN);
        let quarter = 2.0 / (4.0 * n as f64);
        out.push(check(
            &format!("pigou exact incentive N={n}"),
            (sim - closed).abs() <= 1e-12 && (closed - quarter).abs() <= 1e-12,
            format!("simulated {sim:.12}, enumerated {closed:.12}, formula {:.12}", pigou_deviation_formula(n, 2.0)),
        ));
    }

    let nash = brute_force_nash(&scenario, 2, NASH_PROFILE_BUDGET)?;
    // path 1 is the congestible link; its share must lie in [0, 1/2]
    let mut expected: Vec<Vec<usize>> = vec![vec![0, 0], vec![1, 0], vec![0, 1]];
    expected.sort();
    let mut found = nash.equilibria.clone();
    found.sort();
    out.push(check("pigou N=2 pure equilibria", found == expected, format!("{found:?}")));
    out.push(check(
        "pigou N=2 minimax gain",
        nash.minimax.1 <= 1e-12,
        format!("{:?}", nash.minimax),
    ));

    let braess = scenarios::braess(0.05, 5.0)?;
    let nash = brute_force_nash(&braess, 2, NASH_PROFILE_BUDGET)?;
    out.push(check(
        "braess N=2 has a pure equilibrium",
        !nash.equilibria.is_empty(),
        format!("{} of 9 profiles", nash.equilibria.len()),
    ));

    let disc = discontinuous_pigou_scenario()?;
    let l = &disc.network.links()[0].congestion;
    let lp = &disc.network.links()[1].congestion;
    let (a, b) = (l.evaluate(0.5)?, lp.evaluate(0.5)?);
    out.push(check("discontinuous costs at 0.5", a == 2.0 && b == 1.0, format!("c = {a}, c' = {b}")));

    let constant = scenarios::two_link(CongestionFn::constant(1.0), CongestionFn::constant(2.0), 0.1, 4.0)?;
    let nash = brute_force_nash(&constant, 3, NASH_PROFILE_BUDGET)?;
    out.push(check(
        "constant costs: only the cheap link",
        nash.equilibria == vec![vec![0, 0, 0]],
        format!("{:?}", nash.equilibria),
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_small_values() {
        assert_eq!(pigou_deviation_formula(2, 2.0), 0.25);
        assert_eq!(pigou_deviation_formula(2, 1.0), 0.125);
        assert_eq!(pigou_deviation_formula(1, 2.0), 0.0);
        assert_close!(pigou_deviation_formula(4, 2.0), 0.15625, 1e-15);
    }

    #[test]
    fn enumeration_is_a_quarter_over_n() {
        for n in 1..=30u64 {
            let r = pigou_even_split_incentive_rational(n);
            assert_eq!(r, BigRational::new(BigInt::one(), BigInt::from(4 * n)));
        }
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), BigInt::from(10));
        assert_eq!(binomial(3, 4), BigInt::zero());
        assert_eq!(binomial(60, 30), "118264581564861424".parse::<BigInt>().unwrap());
    }

    #[test]
    fn equilibrium_splits() {
        assert_eq!(pigou_mf_equilibrium(PigouVariant::Classic), 0.5);
        assert_eq!(pigou_equilibrium_cost(PigouVariant::Classic), 2.0);
        assert_eq!(pigou_mf_equilibrium(PigouVariant::HorizonScaled { t: 3.0 }), 0.5);
    }

    #[test]
    fn all_checks_pass() {
        for c in run_checks().unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn nash_budget() {
        let s = scenarios::braess(0.05, 5.0).unwrap();
        assert!(matches!(brute_force_nash(&s, 3, 20), Err(Error::Size(_))));
    }
}
