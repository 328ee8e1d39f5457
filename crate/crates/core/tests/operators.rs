use pim_core::assembly::symmetrizer;
use pim_core::bench::{gauge_fixed_l2_error, sample_circle, solve_case, weighted_l2_error, BoundaryKind, CaseOptions};
use pim_core::bench::{Geometry, TestCase};
use pim_core::cloud::select_bandwidth_global;
use pim_core::solve::{solve_eigs, solve_neumann, solve_robin, system_rhs};
use pim_core::tv::{extract_patches, nonlocal_gradient, random_mask, tv_inpaint, GrayImage, TVOptions};
use pim_core::{Assembler, Bandwidth, KernelFamily, KernelSpec, PointCloud, ProblemSpec, SolveOptions};

fn kernel_for(cloud: &PointCloud) -> KernelSpec {
    KernelSpec::new(
        KernelFamily::Gaussian,
        select_bandwidth_global(cloud, 10).unwrap(),
        cloud.intrinsic_dim(),
    )
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Shifts `f` by a constant so that `1ᵀ D M f = 0`.
fn make_compatible(asm: &Assembler, p: &[f64], f: &mut [f64]) {
    let d = symmetrizer(asm.cloud(), p);
    let mass = asm.mass(p).unwrap();
    let dot = |v: &[f64]| mass.mul_vec(v).iter().zip(&d).map(|(m, d)| m * d).sum::<f64>();
    let c = dot(f) / dot(&vec![1.0; f.len()]);
    f.iter_mut().for_each(|v| *v -= c);
}

#[test]
fn mass_rows_integrate_to_one_on_the_circle() {
    let cloud = sample_circle(4000).unwrap();
    let asm = Assembler::new(&cloud, kernel_for(&cloud)).unwrap();
    let sums = asm.mass(&vec![1.0; 4000]).unwrap().mul_vec(&vec![1.0; 4000]);
    for s in sums {
        assert!((s - 1.0).abs() < 0.02, "{s}");
    }
}

#[test]
fn mass_kernel_part_is_symmetric() {
    let case = TestCase::new(Geometry::Annulus, 684).unwrap();
    let p = case.coefficient_values();
    let v = case.cloud.volume();
    let m = Assembler::new(&case.cloud, kernel_for(&case.cloud))
        .unwrap()
        .mass(&p)
        .unwrap();
    for i in (0..case.cloud.len()).step_by(37) {
        for j in 0..case.cloud.len() {
            let (a, b) = (m.get(i, j) * p[j] / v[j], m.get(j, i) * p[i] / v[i]);
            assert!((a - b).abs() <= 1e-13 * a.abs().max(b.abs()).max(1e-300));
        }
    }
}

#[test]
fn unit_forcing_gives_mass_row_sums() {
    let case = TestCase::new(Geometry::Disk, 684).unwrap();
    let asm = Assembler::new(&case.cloud, kernel_for(&case.cloud)).unwrap();
    let n = case.cloud.len();
    let ones = vec![1.0; n];
    let rhs = asm.rhs_interior(&ones, &ones).unwrap();
    let sums = asm.mass(&ones).unwrap().mul_vec(&ones);
    for (a, b) in rhs.iter().zip(&sums) {
        assert!((a - b).abs() <= 1e-14 * b.abs());
    }
    assert!(asm
        .rhs_interior(&ones, &vec![0.0; n])
        .unwrap()
        .iter()
        .all(|&v| v == 0.0));
}

#[test]
fn neumann_load_vanishes_far_from_the_boundary() {
    let case = TestCase::new(Geometry::Disk, 2610).unwrap();
    let t = 0.004;
    let asm = Assembler::new(&case.cloud, KernelSpec::gaussian(t, 2)).unwrap();
    let p = vec![1.0; case.cloud.len()];
    let load = asm.rhs_neumann(&p, &vec![1.0; case.cloud.num_boundary()]).unwrap();
    let peak = max_abs(&load);
    for (x, v) in case.cloud.points().zip(&load) {
        if 1.0 - x[0].hypot(x[1]) >= 10.0 * t.sqrt() {
            assert!(v.abs() < 1e-8 * peak);
        }
    }
    let zero = asm.rhs_neumann(&p, &vec![0.0; case.cloud.num_boundary()]).unwrap();
    assert!(zero.iter().all(|&v| v == 0.0));
}

#[test]
fn robin_block_scales_with_inverse_beta() {
    let case = TestCase::new(Geometry::Annulus, 684).unwrap();
    let asm = Assembler::new(&case.cloud, kernel_for(&case.cloud)).unwrap();
    let p = case.coefficient_values();
    let g = case.dirichlet_values();
    let (b1, r1) = asm.robin(&p, &g, 0.7).unwrap();
    let (b2, r2) = asm.robin(&p, &g, 1.4).unwrap();
    for (x, y) in b1.values().iter().zip(b2.values()) {
        assert!((x - 2.0 * y).abs() <= 1e-15 * x.abs());
    }
    for (x, y) in r1.iter().zip(&r2) {
        assert!((x - 2.0 * y).abs() <= 1e-14 * x.abs().max(1e-300));
    }
    let (b0, r0) = asm.robin(&p, &vec![0.0; g.len()], 0.7).unwrap();
    assert_eq!(b0, b1);
    assert!(r0.iter().all(|&v| v == 0.0));
}

#[test]
fn constants_solve_the_homogeneous_robin_system() {
    let case = TestCase::new(Geometry::Disk, 684).unwrap();
    let n = case.cloud.len();
    let c = 1.75;
    let problem = ProblemSpec::robin(
        case.coefficient_values(),
        vec![0.0; n],
        vec![c; case.cloud.num_boundary()],
        0.5,
    );
    let bundle = Assembler::new(&case.cloud, kernel_for(&case.cloud))
        .unwrap()
        .bundle(&problem)
        .unwrap();
    let u = vec![c; n];
    let lhs = bundle.system_matrix().mul_vec(&u);
    let scale = max_abs(&bundle.boundary_rhs);
    for (a, b) in lhs.iter().zip(&bundle.boundary_rhs) {
        assert!((a - b).abs() <= 1e-12 * scale);
    }
    let rhs = system_rhs(&bundle, &problem.f_vals).unwrap();
    let sol = solve_robin(&bundle, &rhs, &SolveOptions::default()).unwrap();
    for v in sol.u {
        assert!((v - c).abs() < 1e-8);
    }
}

#[test]
fn large_beta_robin_approaches_neumann() {
    let case = TestCase::new(Geometry::Disk, 684).unwrap();
    let cloud = &case.cloud;
    let asm = Assembler::new(cloud, kernel_for(cloud)).unwrap();
    let p = case.coefficient_values();
    let mut f = case.forcing_values();
    make_compatible(&asm, &p, &mut f);
    let zeros = vec![0.0; cloud.num_boundary()];
    let options = SolveOptions::default();
    let neumann = ProblemSpec::neumann(p.clone(), f.clone(), zeros.clone());
    let bundle = asm.bundle(&neumann).unwrap();
    let reference = solve_neumann(&bundle, &system_rhs(&bundle, &f).unwrap(), &options).unwrap();
    let d = symmetrizer(cloud, &p);
    let mut gaps = Vec::new();
    for beta in [10.0, 100.0, 1000.0] {
        let problem = ProblemSpec::robin(p.clone(), f.clone(), zeros.clone(), beta);
        let bundle = asm.bundle(&problem).unwrap();
        let u = solve_robin(&bundle, &system_rhs(&bundle, &f).unwrap(), &options)
            .unwrap()
            .u;
        let (_, rel) = gauge_fixed_l2_error(cloud, &u, &reference.u, &d).unwrap();
        gaps.push(rel);
    }
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[2] < 1e-2, "{gaps:?}");
}

#[test]
fn small_beta_robin_matches_alm_on_the_annulus() {
    let case = TestCase::new(Geometry::Annulus, 684).unwrap();
    let mut alm = CaseOptions::new(BoundaryKind::Dirichlet);
    alm.allow_unconverged = true;
    let alm = solve_case(&case, &alm).unwrap();
    let problem = ProblemSpec::robin(
        case.coefficient_values(),
        case.forcing_values(),
        case.dirichlet_values(),
        1e-3,
    );
    let asm = Assembler::new(&case.cloud, kernel_for(&case.cloud)).unwrap();
    let bundle = asm.bundle(&problem).unwrap();
    let rhs = system_rhs(&bundle, &problem.f_vals).unwrap();
    let u = solve_robin(&bundle, &rhs, &SolveOptions::default()).unwrap().u;
    let (abs, _) = weighted_l2_error(&case.cloud, &u, &case.exact_values()).unwrap();
    assert!(
        abs <= 3.0 * alm.abs_l2 && abs >= alm.abs_l2 / 3.0,
        "{abs} vs {}",
        alm.abs_l2
    );
}

#[test]
fn alm_residual_is_monotone_on_the_annulus() {
    let case = TestCase::new(Geometry::Annulus, 684).unwrap();
    let mut options = CaseOptions::new(BoundaryKind::Dirichlet);
    options.allow_unconverged = true;
    options.solve.alm_max_outer = 30;
    let history = solve_case(&case, &options).unwrap().solution.boundary_residual_history;
    assert_eq!(history.len(), 30);
    for w in history.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{history:?}");
    }
}

#[test]
fn interpolation_reproduces_constants() {
    let case = TestCase::new(Geometry::Annulus, 684).unwrap();
    let cloud = &case.cloud;
    let asm = Assembler::new(cloud, kernel_for(cloud)).unwrap();
    let n = cloud.len();
    let p = case.coefficient_values();
    let u = vec![-2.5; n];
    for x in [[1.5, 0.3], [0.0, -2.9], [2.0, 2.0]] {
        let v = asm.interpolate(&p, &vec![0.0; n], &u, &x).unwrap();
        assert!((v + 2.5).abs() < 1e-13);
    }
}

#[test]
fn neumann_ground_state_is_constant() {
    let case = TestCase::new(Geometry::Disk, 684).unwrap();
    let bundle = Assembler::new(&case.cloud, kernel_for(&case.cloud))
        .unwrap()
        .eigen_bundle(&case.coefficient_values(), None)
        .unwrap();
    let pairs = solve_eigs(
        &bundle,
        &SolveOptions {
            eig_count: 4,
            ..SolveOptions::default()
        },
    )
    .unwrap();
    assert!(pairs[0].value.abs() <= 1e-8 * pairs[1].value);
    let v = &pairs[0].vector;
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    assert!(v.iter().all(|x| (x - mean).abs() <= 1e-6 * mean.abs()));
}

#[test]
fn two_point_gradient_is_shared() {
    let cloud = PointCloud::new(2, 2, vec![0.0, 0.0, 0.3, 0.4], vec![1.0, 1.0], vec![], vec![]).unwrap();
    let t = 0.05;
    let kernel = KernelSpec::gaussian(t, 2);
    let grad = nonlocal_gradient(&cloud, &kernel, &[1.0, 3.0]).unwrap();
    // w̄ = R̄(0) + R̄(d) with d² = 0.25; the single pair term is R(d) (x_i − x_j)(u_i − u_j).
    let c = kernel.normalization(t);
    let (r0, rd) = (c, c * (-0.25f64 / (4.0 * t)).exp());
    let scale = rd * 2.0 / (2.0 * t * (r0 + rd));
    let expected = [0.3 * scale, 0.4 * scale];
    for g in &grad {
        assert!(
            (g[0] - expected[0]).abs() < 1e-14 && (g[1] - expected[1]).abs() < 1e-14,
            "{grad:?}"
        );
    }
    assert!(matches!(kernel.bandwidth, Bandwidth::Global(_)));
}

#[test]
fn halving_epsilon_moves_the_restoration_continuously() {
    let image = GrayImage::from_fn(32, 32, |r, c| {
        0.5 + 0.3 * (r as f64 / 5.0).sin() * (c as f64 / 7.0).cos() + 0.004 * (r + 3 * c) as f64
    })
    .unwrap();
    let mask = random_mask(32 * 32, 0.1, 5).unwrap();
    let patches = extract_patches(&image, 5).unwrap().with_mask(mask).unwrap();
    let base = TVOptions::default();
    let a = tv_inpaint(&patches, &image.values, &base).unwrap();
    let b = tv_inpaint(
        &patches,
        &image.values,
        &TVOptions {
            epsilon: base.epsilon / 2.0,
            ..base.clone()
        },
    )
    .unwrap();
    let diff = a
        .image
        .values
        .iter()
        .zip(&b.image.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(diff.is_finite() && diff < 0.1, "{diff}");
}
