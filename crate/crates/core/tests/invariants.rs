//! Property tests for symmetries and bounds that hold for any configuration.

use ionkink::imaging::{render_positions, CameraConfig};
use ionkink::model::{SpeciesConfig, UnitScale, DEFAULT_OMEGA_X};
use ionkink::modes::spectrum_from_hessian;
use ionkink::potential::{self, Vec3};
use ionkink::quenchlab::OccurrenceRow;
use ionkink::statics::{signature_flips, SIGN_FRACTION};
use proptest::prelude::*;

const CURV: [f64; 3] = [1.0, 118.8, 131.0];

fn separated(min: f64) -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec((-3.0..3.0f64, -1.0..1.0f64, -1.0..1.0f64), 2..8)
        .prop_map(|v| v.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect::<Vec<_>>())
        .prop_filter("ions too close", move |p: &Vec<Vec3>| {
            (0..p.len()).all(|i| (i + 1..p.len()).all(|j| (p[i] - p[j]).norm() > min))
        })
}

fn zigzag_like() -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec((0.1..0.5f64, any::<bool>()), 4..20).prop_map(|v| {
        v.into_iter().enumerate().map(|(k, (a, s))| Vec3::new(k as f64, if s { a } else { -a }, 0.0)).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coulomb_energy_is_rigid_motion_invariant(p in separated(0.1), shift in prop::array::uniform3(-2.0..2.0f64), angle in 0.0..6.3f64) {
        let rot = nalgebra::Rotation3::from_axis_angle(&Vec3::x_axis(), angle);
        let moved: Vec<Vec3> = p.iter().map(|r| rot * r + Vec3::from(shift)).collect();
        let a = potential::coulomb_energy(&p).unwrap();
        let b = potential::coulomb_energy(&moved).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }

    #[test]
    fn potential_is_mirror_and_permutation_symmetric(p in separated(0.1)) {
        let e = potential::potential_energy(&p, &CURV).unwrap();
        let mirrored: Vec<Vec3> = p.iter().map(|r| Vec3::new(-r.x, -r.y, r.z)).collect();
        let mut reversed = p.clone();
        reversed.reverse();
        prop_assert!((potential::potential_energy(&mirrored, &CURV).unwrap() - e).abs() <= 1e-10 * e);
        prop_assert!((potential::potential_energy(&reversed, &CURV).unwrap() - e).abs() <= 1e-10 * e);
    }

    #[test]
    fn hessian_is_symmetric_with_trap_trace(p in separated(0.2)) {
        let h = potential::hessian(&p, &CURV).unwrap();
        let scale = h.amax();
        prop_assert!((&h - h.transpose()).amax() <= 1e-12 * scale);
        // The Coulomb part is traceless (harmonic 1/r).
        let trace = p.len() as f64 * CURV.iter().sum::<f64>();
        prop_assert!((h.trace() - trace).abs() <= 1e-9 * scale * p.len() as f64);
    }

    #[test]
    fn forces_are_the_negative_gradient(p in separated(0.3)) {
        let f = potential::forces(&p, &CURV).unwrap();
        let h = 1e-6;
        for i in 0..p.len() {
            for a in 0..3 {
                let mut plus = p.clone();
                let mut minus = p.clone();
                plus[i][a] += h;
                minus[i][a] -= h;
                let fd = -(potential::potential_energy(&plus, &CURV).unwrap() - potential::potential_energy(&minus, &CURV).unwrap()) / (2.0 * h);
                prop_assert!((fd - f[i][a]).abs() <= 1e-5 * (1.0 + f[i][a].abs()));
            }
        }
    }

    #[test]
    fn ipr_is_bounded_and_weights_normalized(p in separated(0.3)) {
        let h = potential::hessian(&p, &CURV).unwrap();
        // Not an equilibrium, so shift the spectrum to make it positive.
        let shift = h.symmetric_eigenvalues().min().abs() + 1.0;
        let h = h + nalgebra::DMatrix::identity(3 * p.len(), 3 * p.len()) * shift;
        let s = spectrum_from_hessian(h, p.len()).unwrap();
        let n = p.len() as f64;
        for m in 0..s.len() {
            let w: f64 = s.ion_weights(m).iter().sum();
            prop_assert!((w - 1.0).abs() < 1e-10);
            let ipr = s.ipr(m);
            prop_assert!(ipr >= 1.0 / n - 1e-12 && ipr <= 1.0 + 1e-12);
        }
        prop_assert!(s.frequencies.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn flip_count_is_mirror_and_translation_invariant(p in zigzag_like(), dy in -1.0..1.0f64, dz in -1.0..1.0f64) {
        let n = signature_flips(&p, SIGN_FRACTION).len();
        let moved: Vec<Vec3> = p.iter().map(|r| r + Vec3::new(0.0, dy, dz)).collect();
        prop_assert_eq!(signature_flips(&moved, SIGN_FRACTION).len(), n);
        let y_mirror: Vec<Vec3> = p.iter().map(|r| Vec3::new(r.x, -r.y, r.z)).collect();
        let x_mirror: Vec<Vec3> = p.iter().map(|r| Vec3::new(-r.x, r.y, r.z)).collect();
        prop_assert_eq!(signature_flips(&y_mirror, SIGN_FRACTION).len(), n);
        prop_assert_eq!(signature_flips(&x_mirror, SIGN_FRACTION).len(), n);
        // Charges alternate, so their sum is -1, 0 or +1.
        let q: i32 = signature_flips(&p, SIGN_FRACTION).iter().map(|f| f.charge as i32).sum();
        prop_assert!(q.abs() <= 1);
    }

    #[test]
    fn occurrence_probabilities_are_a_distribution(z in 0usize..50, o in 0usize..50, m in 0usize..50, f in 0usize..50) {
        let row = OccurrenceRow { n_ions: 10, trials: z + o + m + f, zigzag: z, one_kink: o, multi_kink: m, failed: f };
        let ps = [row.p_zigzag(), row.p_one_kink(), row.p_multi(), row.p_failed()];
        prop_assert!(ps.iter().all(|p| (0.0..=1.0).contains(p)));
        if row.trials > 0 {
            prop_assert!((ps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let s = row.sigma(row.p_one_kink());
        prop_assert!((0.0..=0.5).contains(&s));
    }

    #[test]
    fn rendering_is_additive_and_conserves_weight(
        a in prop::collection::vec((-5.0..5.0f64, -0.3..0.3f64), 1..6),
        b in prop::collection::vec((-5.0..5.0f64, -0.3..0.3f64), 1..6),
    ) {
        let units = UnitScale::new(&SpeciesConfig::magnesium24(), DEFAULT_OMEGA_X);
        let cam = CameraConfig::default();
        let to = |v: &Vec<(f64, f64)>| v.iter().map(|&(x, y)| Vec3::new(x, y, 0.1)).collect::<Vec<_>>();
        let (pa, pb) = (to(&a), to(&b));
        let mut both = pa.clone();
        both.extend(&pb);
        let fa = render_positions(&pa, &cam, &units).unwrap();
        let fb = render_positions(&pb, &cam, &units).unwrap();
        let fab = render_positions(&both, &cam, &units).unwrap();
        prop_assert!((fab.total() - both.len() as f64).abs() < 1e-3 * both.len() as f64);
        for r in 0..cam.height {
            for c in 0..cam.width {
                prop_assert!((fab.at(r, c) - fa.at(r, c) - fb.at(r, c)).abs() < 1e-12);
            }
        }
    }
}
