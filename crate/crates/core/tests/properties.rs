use num_complex::Complex64;
use proptest::prelude::*;
use skinheal::config::{emit_config, emit_config_json, parse_config, parse_config_json};
use skinheal::evolution::{evolve, rk4_step, EvolveParams, InitialState, PotentialBox, PotentialSpec};
use skinheal::laurent::sort_by_modulus;
use skinheal::spectra::{obc_gbz_scan, pbc_spectrum, predict_self_healing, winding_integral, winding_roots, ScanGrid, ThresholdReport, PredictedVerdict};
use skinheal::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn coeff() -> impl Strategy<Value = Complex64> {
    (-1.5f64..1.5, -1.5f64..1.5).prop_map(|(a, b)| c(a, b))
}

/// Tight symbol with `1 <= r, s <= 3` and extreme hops bounded away from zero.
fn symbol() -> impl Strategy<Value = LaurentSymbol> {
    (1i32..=3, 1i32..=3)
        .prop_flat_map(|(r, s)| {
            let n = (r + s + 1) as usize;
            (Just(r), Just(s), prop::collection::vec(coeff(), n), 0.3f64..1.5, 0.0f64..std::f64::consts::TAU, 0.3f64..1.5, 0.0f64..std::f64::consts::TAU)
        })
        .prop_map(|(r, s, mut cs, a, pa, b, pb)| {
            cs[0] = Complex64::from_polar(a, pa);
            let last = cs.len() - 1;
            cs[last] = Complex64::from_polar(b, pb);
            LaurentSymbol::new((-r..=s).zip(cs)).unwrap()
        })
}

fn poly_eval(coeffs: &[Complex64], x: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(c(0.0, 0.0), |acc, a| acc * x + a)
}

/// Expands `lead * prod (x - root)` into ascending coefficients.
fn from_roots(roots: &[Complex64], lead: Complex64) -> Vec<Complex64> {
    let mut p = vec![lead];
    for r in roots {
        let mut next = vec![c(0.0, 0.0); p.len() + 1];
        for (i, a) in p.iter().enumerate() {
            next[i + 1] += a;
            next[i] -= a * r;
        }
        p = next;
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn roots_reconstruct_characteristic_polynomial(sym in symbol(), e in coeff()) {
        let poly = sym.char_poly(e);
        let rs = sym.char_roots(e).unwrap();
        prop_assert_eq!(rs.len(), sym.r() + sym.s());
        let rebuilt = from_roots(&rs.roots, *poly.last().unwrap());
        let scale: f64 = poly.iter().map(|a| a.norm()).fold(0.0, f64::max);
        if !rs.near_degenerate {
            for (a, b) in poly.iter().zip(&rebuilt) {
                prop_assert!((a - b).norm() < 1e-8 * scale, "{:?} vs {:?}", poly, rebuilt);
            }
        }
        for beta in &rs.roots {
            let bound: f64 = poly.iter().map(|a| a.norm()).sum::<f64>() * beta.norm().max(1.0).powi(poly.len() as i32);
            prop_assert!(poly_eval(&poly, *beta).norm() < 1e-10 * bound);
        }
    }

    #[test]
    fn modulus_order_is_permutation_invariant(sym in symbol(), e in coeff(), seed in any::<u64>()) {
        let rs = sym.char_roots(e).unwrap();
        let mut shuffled = rs.roots.clone();
        let n = shuffled.len();
        let mut state = seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        sort_by_modulus(&mut shuffled);
        prop_assert_eq!(&shuffled, &rs.roots);
        for w in rs.roots.windows(2) {
            prop_assert!(w[0].norm() <= w[1].norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn winding_routes_agree(sym in symbol(), e in coeff()) {
        let m = SingleBandModel::new(sym);
        let rs = m.char_roots(e).unwrap();
        prop_assume!(rs.min_unit_distance() > 1e-3);
        prop_assert_eq!(winding_roots(&m, e).unwrap(), winding_integral(&m, e, 512).unwrap());
    }

    #[test]
    fn open_truncation_is_toeplitz(sym in symbol(), n in 14usize..24) {
        let m = SingleBandModel::new(sym.clone());
        let h = build_truncated(&m, n, Boundary::Open).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(h.entry(i, j), sym.coeff(i as i32 - j as i32));
            }
        }
    }

    #[test]
    fn pbc_loop_is_symbol_image(sym in symbol()) {
        let m = SingleBandModel::new(sym.clone());
        let pbc = pbc_spectrum(&m, 128).unwrap();
        for p in &pbc.samples {
            let e = sym.eval(Complex64::from_polar(1.0, p.k)).unwrap();
            prop_assert!((e - p.energy).norm() < 1e-12 * (1.0 + e.norm()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn gbz_points_are_tied_and_obc_energies_never_heal(
        a in 0.3f64..1.0, b in 0.3f64..1.0, t0 in -0.5f64..0.5, t2 in 0.2f64..0.9,
    ) {
        let m = SingleBandModel::new(LaurentSymbol::from_real(&[(-2, 1.0), (-1, a), (0, t0), (1, b), (2, t2)]).unwrap());
        let grid = ScanGrid::around_loop(&pbc_spectrum(&m, 512).unwrap(), 60);
        let gbz = obc_gbz_scan(&m, &grid, 1e-9).unwrap();
        let mr = m.pole_order();
        for p in &gbz.points {
            let rs = m.char_roots(p.energy).unwrap();
            let (lo, hi) = (rs.roots[mr - 1].norm(), rs.roots[mr].norm());
            prop_assert!((hi - lo) <= 1e-6 * hi);
            prop_assert!((m.symbol.eval(p.beta).unwrap() - p.energy).norm() < 1e-7);
        }
        let e_m1 = gbz.max_im_energy();
        let th = ThresholdReport {
            e_m1, e_m2: None, e_m: e_m1, bloch_points_present: false,
            gbz_points: gbz.points.len(), min_beta_modulus: gbz.min_beta_modulus(), max_beta_modulus: gbz.max_beta_modulus(),
        };
        for e in gbz.obc_energies() {
            let p = predict_self_healing(&m, e, &th).unwrap();
            prop_assert_ne!(p.verdict, PredictedVerdict::SelfHealing);
        }
    }

    #[test]
    fn norm_balance_matches_finite_difference(seed in any::<u64>(), t in 0.0f64..6.0) {
        let m = SingleBandModel::new(LaurentSymbol::from_real(&[(-2, 1.0), (-1, 1.0), (0, 0.0), (1, 0.7), (2, 0.8)]).unwrap());
        let h = build_truncated(&m, 40, Boundary::Open).unwrap();
        let v = PotentialSpec { boxes: vec![PotentialBox::all_bands(1, 10, 1, 2.0, 4.0, c(0.3, -10.0))] };
        let mut state = seed | 1;
        let psi: Vec<Complex64> = (0..40).map(|_| {
            state ^= state << 13; state ^= state >> 7; state ^= state << 17;
            c((state % 1000) as f64 / 500.0 - 1.0, ((state >> 20) % 1000) as f64 / 500.0 - 1.0)
        }).collect();
        // keep the stencil away from the potential switching times
        prop_assume!((t - 2.0).abs() > 1e-3 && (t - 4.0).abs() > 1e-3);
        let dt = 1e-4;
        let fwd = rk4_step(&h, &v, &psi, t, dt).unwrap();
        let bwd = rk4_step(&h, &v, &psi, t, -dt).unwrap();
        let n2 = |x: &[Complex64]| x.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let fd = (n2(&fwd) - n2(&bwd)) / (2.0 * dt);
        let mut kpsi = vec![c(0.0, 0.0); 40];
        h.apply(&psi, &mut kpsi);
        for (n, k) in kpsi.iter_mut().enumerate() {
            *k += skinheal::evolution::potential_at(&v, n + 1, 0, t) * psi[n];
        }
        let exact = 2.0 * psi.iter().zip(&kpsi).map(|(a, b)| a.conj() * b).sum::<Complex64>().im;
        prop_assert!((fd - exact).abs() < 1e-6 * (1.0 + exact.abs()), "{} vs {}", fd, exact);
    }

    #[test]
    fn deviation_is_scale_invariant(factor in prop::sample::select(vec![17.0, -3.0, 0.01])) {
        let m = SingleBandModel::new(LaurentSymbol::from_real(&[(-1, 1.0), (1, 0.5)]).unwrap());
        let psi0: Vec<Complex64> = (0..60).map(|i| c((-(i as f64 - 8.0).powi(2) / 8.0).exp(), 0.0)).collect();
        let scaled: Vec<Complex64> = psi0.iter().map(|z| z * factor).collect();
        let v = PotentialSpec { boxes: vec![PotentialBox::all_bands(1, 10, 1, 0.5, 1.0, c(0.0, -10.0))] };
        let mut p = EvolveParams::defaults_for(&m);
        p.n_sites = 60;
        p.t_end = 2.0;
        let a = evolve(&m, InitialState::Vector(psi0), &v, &p).unwrap();
        let b = evolve(&m, InitialState::Vector(scaled), &v, &p).unwrap();
        for (x, y) in a.eps.iter().zip(&b.eps) {
            prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1e-300));
        }
    }

    #[test]
    fn config_round_trips(
        n in 50usize..400, dt in 1e-4f64..1e-2, t_end in 1.0f64..50.0,
        re in -2.0f64..2.0, im in -1.0f64..1.0, v in -20.0f64..20.0,
    ) {
        let text = format!(
            "[model]\ntype = \"two_chain\"\nt1 = 0.75\ndelta_a = 0.25\ndelta_b = -0.15\nt0 = 0.05\nV = 0.8\n\
             [lattice]\nN = {n}\n[integrate]\ndt = {dt:e}\nt_end = {t_end:e}\n\
             [initial]\ntype = \"skin_mode\"\nE0 = [{re:e}, {im:e}]\n\
             [[potential]]\nn_min = 1\nn_max = 10\nt_on = 0.5\nt_off = 1.0\nvalue = [0.0, {v:e}]\n\
             [scan]\nresolution = 40\n"
        );
        let cfg = parse_config(&text).unwrap();
        prop_assert_eq!(&parse_config(&emit_config(&cfg).unwrap()).unwrap(), &cfg);
        prop_assert_eq!(&parse_config_json(&emit_config_json(&cfg).unwrap()).unwrap(), &cfg);
    }
}
