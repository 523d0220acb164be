use magnls::config::RunConfig;
use magnls::evolve::{evolve, global_existence_gate, EvolveConfig, StrangStepper, Status};
use magnls::magnetic::PotentialSet;
use magnls::verify::{random_vector_potential, PacketField};
use magnls::{make_grid, snapshot, GridSpec, LocalSpec, NonlocalSpec, Sign, System, C64};
use proptest::prelude::*;

fn coupled(beta: f64, sign: Sign) -> LocalSpec {
    LocalSpec {
        a: vec![1.0, 0.5],
        beta: vec![vec![0.0, beta], vec![beta, 0.0]],
        l: vec![2.0, 2.0],
        sign,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn strang_conserves_each_charge(seed in any::<u64>(), beta in 0.0f64..1.0, focusing in any::<bool>()) {
        let grid = make_grid(GridSpec::new(1, 64, 8.0)).unwrap();
        let sign = if focusing { Sign::Focusing } else { Sign::Defocusing };
        let pot = random_vector_potential(seed, &grid, 0.5).unwrap();
        let sys = System::new(pot, coupled(beta, sign), None).unwrap();
        let phi = PacketField::random(seed, 1, 8.0, 2, true).sample(&grid).unwrap();
        let rec = evolve(&sys, &phi, &EvolveConfig::strang(5e-3, 0.5)).unwrap();
        prop_assert_eq!(&rec.status, &Status::Completed);
        prop_assert!(rec.max_charge_drift() < 1e-10, "{}", rec.max_charge_drift());
    }

    #[test]
    fn strang_is_time_reversible(seed in any::<u64>()) {
        let grid = make_grid(GridSpec::new(1, 64, 8.0)).unwrap();
        let pot = PotentialSet::from_fns(grid.clone(), |_| vec![0.0], |x| 1.0 + 0.2 * x[0].cos()).unwrap();
        let sys = System::new(pot, coupled(0.3, Sign::Focusing), None).unwrap();
        let phi = PacketField::random(seed, 1, 8.0, 2, true).sample(&grid).unwrap();
        let there = StrangStepper::new(&sys, 1e-2).step(&phi).unwrap();
        let back = StrangStepper::new(&sys, -1e-2).step(&there).unwrap();
        prop_assert!(back.distance(&phi) < 1e-11 * phi.norm(), "{}", back.distance(&phi));
    }

    #[test]
    fn snapshots_round_trip(seed in any::<u64>(), dim in 1usize..=3) {
        let n = [0, 32, 16, 8][dim];
        let grid = make_grid(GridSpec::new(dim, n, 4.0)).unwrap();
        let phi = PacketField::random(seed, dim, 4.0, 2, true).sample(&grid).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phi.bin");
        snapshot::save(&path, &phi).unwrap();
        let back = snapshot::load(&path).unwrap();
        prop_assert_eq!(back.grid().spec(), grid.spec());
        prop_assert_eq!(back.components(), phi.components());
    }

    #[test]
    fn gate_follows_power_threshold(dim in 1usize..=3, frac in 0.05f64..1.6, inf_v in -1.0f64..1.0) {
        let l = frac * 4.0 / dim as f64;
        let gate = global_existence_gate(&LocalSpec::power(1, l, Sign::Focusing), None, inf_v, dim);
        prop_assert_eq!(gate.global, frac < 1.0 && inf_v > 0.0);
        if !gate.global {
            prop_assert!(gate.verdict().contains("Theorem (solGlobal)"));
        }
    }

    #[test]
    fn gradient_matches_energy_derivative(seed in any::<u64>()) {
        let grid = make_grid(GridSpec::new(1, 64, 6.0)).unwrap();
        let pot = random_vector_potential(seed, &grid, 0.7).unwrap();
        let nonlocal = NonlocalSpec { w: vec![vec![1.0, 0.3], vec![0.3, 0.5]], gamma: 0.5, r0: 0.1, mu: 2.0 };
        let sys = System::new(pot, coupled(0.4, Sign::Focusing), Some(nonlocal)).unwrap();
        let f = PacketField::random(seed, 1, 6.0, 2, true).sample(&grid).unwrap();
        let d = PacketField::random(seed ^ 0x5555, 1, 6.0, 2, true).sample(&grid).unwrap();
        let h = 1e-5;
        let e = |g: &magnls::Field| sys.energy(g).unwrap().f_a;
        let fd = (e(&f.add(&d.scaled(C64::new(h, 0.0)))) - e(&f.sub(&d.scaled(C64::new(h, 0.0))))) / (2.0 * h);
        let exact = sys.gradient(&f).unwrap().real_inner(&d);
        prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "{fd} vs {exact}");
    }
}

#[test]
fn toml_run_end_to_end() {
    let cfg = RunConfig::from_toml_str(
        r#"
[grid]
dim = 2
n_axis = 32
half_width = 8.0

[potentials]
a = { kind = "harmonic_gauge", b = 0.5 }
v = { kind = "harmonic", omega = 0.5, offset = 1.0 }

[local]
a = [1.0]
beta = [[0.0]]
l = [1.0]
sign = "focusing"

[nonlocal]
w = [[0.5]]
gamma = 1.0
r0 = 0.1
mu = 2.2

[initial]
kind = "gaussian"
amplitude = [1.0]
width = 1.0

[evolve]
dt = 5e-3
t_end = 0.25
blowup_threshold = 1e3
snapshot_stride = 10
"#,
    )
    .unwrap();
    let sys = cfg.build_system().unwrap();
    cfg.validate(&sys).unwrap();
    let gate = global_existence_gate(&sys.local, sys.nonlocal_spec(), sys.potentials.inf_v, 2);
    assert!(gate.global, "{}", gate.verdict());
    let phi = cfg.initial_field(&sys).unwrap();
    let rec = evolve(&sys, &phi, cfg.evolve.as_ref().unwrap()).unwrap();
    assert_eq!(rec.status, Status::Completed);
    assert_eq!(rec.snapshots.len(), 6);
    assert!(rec.max_charge_drift() < 1e-10);
    assert!(rec.energy_drift() < 1e-3 * rec.diagnostics[0].f_a.abs().max(1.0));
}
