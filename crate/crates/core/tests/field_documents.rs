//! Field documents driven through geometry, dynamics and the Weyl density.

use std::sync::Arc;

use magspec::dynamics::{integrate_trajectory, MagneticSystem, PhasePoint};
use magspec::field::{parse_field, rank_stratum, ConstantScalar, LoadedField, ScalarField};
use magspec::weyl::{landau_density_2d, local_weyl_params, magnetic_weyl_density};

fn run(field: &LoadedField, mu: f64, x0: &[f64], p0: &[f64], t_end: f64) -> Vec<f64> {
    let scalar: Arc<dyn ScalarField> = field.scalar.clone().unwrap_or_else(|| Arc::new(ConstantScalar(0.0)));
    let sys = MagneticSystem::new(field.metric.clone(), field.potential.clone(), scalar, mu).unwrap();
    let mut a = vec![0.0; x0.len()];
    sys.potential.eval(x0, &mut a);
    let xi = p0.iter().zip(&a).map(|(p, ai)| p + mu * ai).collect();
    let traj = integrate_trajectory(&sys, &PhasePoint::new(x0.to_vec(), xi), t_end, 1e-11).unwrap();
    assert!(traj.max_energy_drift <= traj.energy_tol);
    traj.points.last().unwrap().x.clone()
}

#[test]
fn positions_do_not_depend_on_the_gauge() {
    let symmetric = parse_field(r#"{"potential": ["-x2/2", "x1/2"], "scalar": "0.3*x1"}"#).unwrap();
    let landau = parse_field(r#"{"potential": ["-x2", "0"], "scalar": "0.3*x1"}"#).unwrap();
    let (x0, p0) = ([0.2, -0.1], [0.5, 0.4]);
    let a = run(&symmetric, 5.0, &x0, &p0, 3.0);
    let b = run(&landau, 5.0, &x0, &p0, 3.0);
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-7, "{a:?} vs {b:?}");
    }
}

#[test]
fn rank_drops_on_the_zero_set_of_the_field() {
    let f = parse_field(r#"{"potential": ["0", "x1^2/2"]}"#).unwrap();
    assert_eq!(rank_stratum(&f.form, &[0.0, 0.7], 1e-10).unwrap(), 2);
    assert_eq!(rank_stratum(&f.form, &[0.4, 0.7], 1e-10).unwrap(), 0);
}

#[test]
fn local_weyl_density_matches_landau_levels() {
    let f = parse_field(r#"{"potential": ["-x2/2", "x1/2"], "scalar": "1 - x1"}"#).unwrap();
    let scalar = f.scalar.clone().unwrap();
    let (mu, h) = (3.0, 0.2);
    for energy in [-0.5, 0.0, 0.4, 1.7] {
        let p = local_weyl_params(f.metric.as_ref(), &f.form, scalar.as_ref(), &[0.25, -0.6], energy, mu, h).unwrap();
        assert_eq!(p.d, 2);
        assert_eq!(p.r, 1);
        let weyl = magnetic_weyl_density(&p).unwrap().value;
        let exact = landau_density_2d(p.intensities[0], p.v, p.g, mu, h, energy).unwrap().value;
        assert!((weyl - exact).abs() <= 1e-12 * exact.abs().max(1.0), "energy {energy}: {weyl} vs {exact}");
    }
}
