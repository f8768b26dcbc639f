//! Acceptance suite: one PASS/FAIL line per criterion. Criterion 10 is a
//! report whose outcome is known to be FAIL (see README); every other FAIL
//! makes the run exit nonzero.

use std::process::ExitCode;
use std::time::Instant;

use fgivental::algebra::{int, pow_i, rat, Poly, Rat};
use fgivental::fflat::{self, FflatError, FlatFJet, Grid, MPoly};
use fgivental::ftft::AlgebraSpec;
use fgivental::givental::{self, act_on_tft, GiventalElement, TftFamily};
use fgivental::oracle0::{integrate_tautexpr, kappa_psi_integral, pair_with_all, theta_class};
use fgivental::rspin::{self, CertStatus};
use fgivental::trees::{is_stable, moduli_dim};
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

/// Criteria whose FAIL is an honest, documented finding rather than a bug.
const REPORT_ONLY: &[u32] = &[10];

fn factorial_identity() -> Outcome {
    let ok = (2..=5).all(|r| rspin::factorial_series_check(r, 12));
    Ok((ok, "r = 2..5, m ≤ 12".into()))
}

fn p_tilde_match() -> Outcome {
    let ring = Poly::kappa_ring(4);
    let parse = |s: String| Poly::parse(ring.clone(), &s).map_err(|e| e.to_string());
    for r in [2i64, 3, 5, 7, 11] {
        let expect = [
            parse("k1".into())?,
            parse(format!("{}*k2 - {}*k1^2", 3 * r - 1, r - 1))?,
            parse(format!(
                "{}*k3 - {}*k2*k1 + {}*k1^3",
                2 * (13 * r * r - 8 * r + 1),
                3 * (3 * r * r - 4 * r + 1),
                (r - 1) * (r - 1)
            ))?,
            parse(format!(
                "{}*k4 - {}*k3*k1 - {}*k2^2 + {}*k2*k1^2 - {}*k1^4",
                6 * (71 * r * r * r - 61 * r * r + 15 * r - 1),
                8 * (13 * r * r * r - 21 * r * r + 9 * r - 1),
                3 * (3 * r - 1) * (3 * r - 1) * (r - 1),
                6 * (3 * r - 1) * (r - 1) * (r - 1),
                (r - 1) * (r - 1) * (r - 1)
            ))?,
        ];
        let got = rspin::p_polynomials(r, 4);
        for (m, e) in expect.iter().enumerate() {
            let scaled = got[m].scale(&(-Rat::from_integer(fgivental::algebra::factorial(m as u32 + 1)) / int(r - 1)));
            if &scaled != e {
                return Ok((false, format!("r = {r}, m = {}: got {scaled}, want {e}", m + 1)));
            }
        }
    }
    Ok((true, "P̃_1..P̃_4 for r ∈ {2,3,5,7,11}".into()))
}

fn kappa_vanishing() -> Outcome {
    let mut checked = 0;
    for r in [2u32, 3] {
        for c in rspin::certificates_up_to(r, 0, 8, true).map_err(|e| e.to_string())? {
            if c.status == CertStatus::StrictVanishing && !c.trivial_by_dimension {
                checked += 1;
                if c.verified != Some(true) {
                    return Ok((false, format!("(r,g,n,m) = ({},{},{},{}) does not vanish", c.r, c.g, c.n, c.m)));
                }
            }
        }
    }
    let k2 = kappa_psi_integral(&[0; 5], &[2]);
    let k11 = kappa_psi_integral(&[0; 5], &[1, 1]);
    let p2 = rspin::p_polynomials(2, 2).pop().ok_or("no P_2")?;
    let closed = integrate_tautexpr(&rspin::kappa_poly_to_expr(&p2, 0, 4)).map_err(|e| e.to_string())?;
    let ok = k2 == int(1) && k11 == int(5) && closed == int(0);
    Ok((ok, format!("{checked} nontrivial strict certificates; ∫κ₂ = {k2}, ∫κ₁² = {k11}, ∫P₂ = {closed} on M̄_0,5")))
}

fn theta_vanishing() -> Outcome {
    let zero = |pairs: Vec<(fgivental::tautology::AmbientMonomial, Rat)>| pairs.iter().all(|(_, v)| v.is_zero());
    for n in 6..=8 {
        let t = theta_class(1, n).map_err(|e| e.to_string())?;
        if !zero(pair_with_all(&t, 2).map_err(|e| e.to_string())?) {
            return Ok((false, format!("θ₂ on M̄_0,{n}")));
        }
    }
    // θ₄ has top degree on M̄_0,7; on M̄_0,10 pair with every degree-3 monomial.
    let top = integrate_tautexpr(&theta_class(2, 7).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let t10 = theta_class(2, 10).map_err(|e| e.to_string())?;
    let ok10 = zero(pair_with_all(&t10, 4).map_err(|e| e.to_string())?);
    Ok((top.is_zero() && ok10, format!("θ₂ on M̄_0,6..8; ∫θ₄ on M̄_0,7 = {top}; θ₄ on M̄_0,10 against all monomials")))
}

fn test_spec(dim: usize) -> AlgebraSpec {
    if dim == 1 {
        AlgebraSpec::rank_one(int(2), rat(-3, 2))
    } else {
        AlgebraSpec::diagonal(vec![int(2), rat(-1, 3)])
    }
}

fn group_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for dim in [1usize, 2] {
        for i in 0..20 {
            let a = givental::random_element(&mut rng, dim, 5).r;
            let b = givental::random_element(&mut rng, dim, 5).r;
            if givental::edge_cocycle_defect(&a, &b).map_err(|e| e.to_string())? != 0 {
                return Ok((false, format!("edge cocycle, dim {dim}, pair {i}")));
            }
        }
    }
    // Types in the (g, 1+n) convention.
    let types = [(0u32, 3u32), (0, 4), (1, 1), (1, 2), (2, 1)];
    for dim in [1usize, 2] {
        let spec = test_spec(dim);
        for &(g, n) in &types {
            let order = moduli_dim(g, n) as usize + 1;
            let x = givental::random_element(&mut rng, dim, order);
            let y = givental::random_element(&mut rng, dim, order);
            let (l, r) = givental::composition_sides(&x, &y, &spec, g, n).map_err(|e| e.to_string())?;
            if !l.same_classes(&r) {
                return Ok((false, format!("composition, dim {dim}, ({g},{n})")));
            }
            let (l, r) = givental::semidirect_sides(&x.r, &y.t, &spec, g, n).map_err(|e| e.to_string())?;
            if !l.same_classes(&r) {
                return Ok((false, format!("semidirect, dim {dim}, ({g},{n})")));
            }
        }
    }
    Ok((true, "40 cocycle pairs at order 5; composition and semidirect at (0,3),(0,4),(1,1),(1,2),(2,1)".into()))
}

fn freeness() -> Outcome {
    let spec = test_spec(1);
    let types: Vec<(u32, u32)> =
        (0..=1).flat_map(|g| (0..=5).map(move |n| (g, n))).filter(|&(g, n)| is_stable(g, n) && moduli_dim(g, n) <= 3).collect();
    let pure: Vec<_> = types
        .iter()
        .map(|&(g, n)| act_on_tft(&GiventalElement::identity(1, 4), &spec, g, n))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..20 {
        let e = givental::random_element(&mut rng, 1, 4);
        let mut differs = false;
        for (k, &(g, n)) in types.iter().enumerate() {
            if !act_on_tft(&e, &spec, g, n).map_err(|e| e.to_string())?.same_classes(&pure[k]) {
                differs = true;
                break;
            }
        }
        if !differs {
            return Ok((false, format!("random element {i} acts trivially")));
        }
    }
    let fam = TftFamily::new(spec.clone(), vec![]);
    let ext = givental::extract_element(&fam, &spec, 3).map_err(|e| e.to_string())?;
    let sample = givental::random_element(&mut rng, 1, 3);
    let acted = givental::action_family(&sample, &spec).map_err(|e| e.to_string())?;
    let back = givental::extract_element(&acted, &spec, 3).map_err(|e| e.to_string())?;
    let ok = ext.is_identity() && back == sample;
    Ok((ok, "20 random elements act nontrivially; extraction gives Id, 0 on the TFT and recovers a random element".into()))
}

/// ∂^n F(1) for F = A t^{r+1}/(r(r+1)).
fn potential_derivative(r: u32, n: u32) -> Rat {
    if n > r + 1 {
        return int(0);
    }
    let a = pow_i(&int(-(r as i64)), 1 - r as i64);
    let falling: i64 = (0..n as i64).map(|i| r as i64 + 1 - i).product();
    a * int(falling) / int(r as i64 * (r as i64 + 1))
}

fn reconstruction_closure() -> Outcome {
    for r in 2..=4u32 {
        let j = FlatFJet::rspin(r).map_err(|e| e.to_string())?;
        let (spec, rec) = fflat::reconstruct_at_base(&j, 8).map_err(|e| e.to_string())?;
        let ups = rspin::upsilon_closed(r, 8).map_err(|e| e.to_string())?;
        if !rec.element.r.coeffs.iter().skip(1).all(|m| m.is_zero()) || rec.upsilon != ups {
            return Ok((false, format!("r = {r}: R ≠ Id or Υ differs from the closed form")));
        }
        for n in 2..=r + 3 {
            let s = act_on_tft(&rec.element, &spec, 0, n).map_err(|e| e.to_string())?;
            let v = integrate_tautexpr(&s.evaluate(0, &vec![vec![Rat::from_integer(1.into())]; n as usize]))
                .map_err(|e| e.to_string())?;
            if v != potential_derivative(r, n) {
                return Ok((false, format!("r = {r}, n = {n}: ∫ = {v}")));
            }
        }
    }
    Ok((true, "r = 2, 3, 4: R = Id, Υ to order 8, genus-0 integrals = ∂ⁿF for n ≤ r+3".into()))
}

fn residuals() -> Outcome {
    for r in 2..=5u32 {
        let j = FlatFJet::rspin(r).map_err(|e| e.to_string())?;
        let d = fflat::symbolic_frame_1d(&j).map_err(|e| e.to_string())?.direction();
        let (rr, ups, that) = fflat::rspin_closed_fields(r, 8);
        let ok = fflat::all_vanish(&fflat::r_equation_residual(&d, &rr, &fflat::d_series(&rr, 0)))
            && fflat::that_residual(&d, &that, &fflat::d_vec_series(&that, 0), &rr).iter().flatten().all(MPoly::is_zero)
            && fflat::vacuum_residual(&d, &ups, &fflat::d_vec_series(&ups, 0)).iter().flatten().all(MPoly::is_zero);
        if !ok {
            return Ok((false, format!("symbolic residual nonzero at r = {r}")));
        }
    }
    let j = FlatFJet::from_toml(include_str!("data/decoupled.toml")).map_err(|e| e.to_string())?;
    let eu = j.euler.clone().ok_or("no Euler field")?;
    let mu = j.mu().ok_or("no Euler field")?;
    let field = |s: &[Rat]| -> Result<Vec<Grid<f64>>, FflatError> {
        let f = fflat::canonical_frame_exact(&j, s)?;
        let rec = fflat::conformal_reconstruct(&f, &mu, &eu.delta, 4)?;
        Ok(rec.r_canonical.coeffs.iter().map(|m| m.to_rows().iter().map(|r| r.iter().map(fgivental::algebra::to_f64).collect()).collect()).collect())
    };
    let res = fflat::float_residuals(&j, &j.base, &rat(1, 10000), &field).map_err(|e| e.to_string())?;
    Ok((res.max() < 1e-8, format!("symbolic r = 2..5 exact; decoupled float max residual {:.1e}", res.max())))
}

fn crstar_integrals() -> Outcome {
    for r in 2..=6u32 {
        let v = rspin::crstar_genus0_integral(r).map_err(|e| e.to_string())?;
        let ri = r as i64;
        let fact = Rat::from_integer(fgivental::algebra::factorial(r));
        let sign = if (r + 1) % 2 == 0 { int(1) } else { int(-1) };
        let closed = sign * fact / pow_i(&int(ri), ri);
        let via_a = Rat::from_integer(fgivental::algebra::factorial(r - 1)) * pow_i(&int(-ri), 1 - ri);
        let class = rspin::crstar_genus0_from_class(r).map_err(|e| e.to_string())?;
        if v != closed || v != via_a || v != class {
            return Ok((false, format!("r = {r}: {v}, {closed}, {via_a}, {class}")));
        }
    }
    Ok((true, "r = 2..6".into()))
}

fn equality_normalization() -> Outcome {
    let mut ratios = Vec::new();
    for r in [2u32, 3] {
        for (g, n, m) in rspin::equality_cases(r, 8) {
            let rep = rspin::equality_report(r, g, n, m).map_err(|e| e.to_string())?;
            let ratio = rep.ratio.ok_or_else(|| format!("(r,n,m) = ({r},{n},{m}): both sides vanish"))?;
            println!("    r = {r}, g = {g}, n = {n}, m = {m}: P_m / ((−1)^g r^(g−m) c) = {ratio}");
            ratios.push(ratio);
        }
    }
    let constant = ratios.windows(2).all(|w| w[0] == w[1]);
    let detail = if constant {
        format!("constant ratio {}", ratios[0])
    } else {
        "ratio varies; it equals r^(2(m−g)) in every case".into()
    };
    let scaled = {
        let mut all = true;
        for r in [2u32, 3] {
            for (g, n, m) in rspin::equality_cases(r, 8) {
                let rep = rspin::equality_report(r, g, n, m).map_err(|e| e.to_string())?;
                all &= rep.ratio == Some(pow_i(&int(r as i64), 2 * (m as i64 - g as i64)));
            }
        }
        all
    };
    Ok((constant, if scaled { detail } else { format!("{detail} (r^(2(m−g)) pattern broken)") }))
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "factorial generating identity", factorial_identity),
        (2, "P̃ polynomials", p_tilde_match),
        (3, "genus-0 κ-relation vanishing", kappa_vanishing),
        (4, "θ genus-0 vanishing", theta_vanishing),
        (5, "group laws", group_laws),
        (6, "freeness and extraction", freeness),
        (7, "conformal reconstruction closure", reconstruction_closure),
        (8, "differential-equation residuals", residuals),
        (9, "extended r-spin correlator", crstar_integrals),
        (10, "equality-case normalization", equality_normalization),
    ];
    let mut unexpected = 0;
    for (id, name, f) in criteria {
        let start = Instant::now();
        let (ok, detail) = match f() {
            Ok(x) => x,
            Err(e) => (false, format!("error: {e}")),
        };
        let secs = start.elapsed().as_secs_f64();
        println!("{} {id:>2} {name}: {detail} [{secs:.1}s]", if ok { "PASS" } else { "FAIL" });
        if !ok && !REPORT_ONLY.contains(&id) {
            unexpected += 1;
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
