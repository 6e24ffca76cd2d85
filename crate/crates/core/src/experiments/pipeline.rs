use super::{add_noise_with, relative_error_boundary, relative_error_domain, ManufacturedCase};
use crate::conductivity::{assemble_transport_system, solve_sigma, SigmaBasis, SigmaField};
use crate::geometry::{layer_measure, layer_nodes, BoundaryFrame, InteriorNodeSet, SimplexMesh};
use crate::levi_operators::{evaluate_representation, DensityPair, Discretization, DrmBasis, OperatorBlocks, RimRule};
use crate::regularization::{
    boundary_rhs, mollified_normal_derivative, mollified_value, recover_h, BallRule, ExtendedField, LayerGrid,
    Mollifier, ParamRules, RegularizationParams, ScalarField, TikhonovSystem,
};
use crate::{Error, Point, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stage tags, in execution order.
pub const STAGES: [&str; 7] = [
    "geometry",
    "operators",
    "measure",
    "step1-h",
    "step2a-density",
    "step2b-sigma",
    "metrics",
];

#[cfg(not(target_arch = "wasm32"))]
struct Stopwatch(std::time::Instant);

#[cfg(not(target_arch = "wasm32"))]
impl Stopwatch {
    fn start() -> Self {
        Self(std::time::Instant::now())
    }

    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

// no monotonic clock without a JS shim
#[cfg(target_arch = "wasm32")]
struct Stopwatch;

#[cfg(target_arch = "wasm32")]
impl Stopwatch {
    fn start() -> Self {
        Self
    }

    fn seconds(&self) -> f64 {
        0.0
    }
}

/// Boundary trace of the potential used in the `h` formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceMode {
    /// Exact `u` on the boundary.
    Exact,
    /// `R_α[U^δ]` at the boundary node.
    Mollified,
    /// The interpolated noisy samples at depth 0.
    Interpolated,
}

impl TraceMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TraceMode::Exact => "exact",
            TraceMode::Mollified => "mollified",
            TraceMode::Interpolated => "interpolated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exact" => Some(TraceMode::Exact),
            "mollified" => Some(TraceMode::Mollified),
            "interpolated" => Some(TraceMode::Interpolated),
            _ => None,
        }
    }
}

/// Discretization sizes and solver settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSettings {
    /// `ñ` on curves, Gauss order `N` on surfaces.
    pub resolution: usize,
    pub layer_count: usize,
    /// Layer width; `None` keeps the case's value.
    pub eps: Option<f64>,
    pub node_seed: u64,
    /// DRM centres, taken as an evenly strided subset of the layer nodes.
    pub drm_centers: usize,
    pub rim: RimRule,
    /// Measurement grid spacing is `α / grid_factor`.
    pub grid_factor: f64,
    /// Radial shells and angular resolution of the conductivity collocation.
    pub colloc_rings: usize,
    pub colloc_angular: usize,
    /// Every `boundary_stride`-th boundary node is a conductivity centre.
    pub boundary_stride: usize,
    pub error_rings: usize,
    pub error_angular: usize,
    pub rules: ParamRules,
    pub lambda_s: f64,
    pub trace: TraceMode,
    pub holdout: usize,
}

impl PipelineSettings {
    pub fn defaults(dim: usize) -> Self {
        if dim == 2 {
            Self {
                resolution: 256,
                layer_count: 256,
                eps: None,
                node_seed: 20240,
                drm_centers: 256,
                rim: RimRule::Exact,
                grid_factor: 16.0,
                colloc_rings: 12,
                colloc_angular: 64,
                boundary_stride: 2,
                error_rings: 24,
                error_angular: 128,
                rules: ParamRules::defaults(2),
                lambda_s: 0.0,
                trace: TraceMode::Interpolated,
                holdout: 20,
            }
        } else {
            Self {
                resolution: 32,
                layer_count: 840,
                eps: None,
                node_seed: 20240,
                drm_centers: 840,
                rim: RimRule::Exact,
                grid_factor: 6.0,
                colloc_rings: 6,
                colloc_angular: 2,
                boundary_stride: 4,
                error_rings: 10,
                error_angular: 3,
                rules: ParamRules::defaults(3),
                lambda_s: 0.0,
                trace: TraceMode::Interpolated,
                holdout: 20,
            }
        }
    }
}

/// Everything that depends only on the case and the settings, shared by
/// runs at different noise levels and seeds.
#[derive(Debug)]
pub struct Prepared<const D: usize> {
    pub case: ManufacturedCase<D>,
    pub settings: PipelineSettings,
    pub eps: f64,
    pub disc: Discretization<D>,
    pub frames: Vec<BoundaryFrame<D>>,
    pub layer: InteriorNodeSet<D>,
    pub layer_measure: f64,
    pub drm: DrmBasis<D>,
    pub blocks: OperatorBlocks,
    pub system: TikhonovSystem,
    pub colloc: InteriorNodeSet<D>,
    pub sigma_basis: SigmaBasis<D>,
    pub sigma_star: Vec<f64>,
    pub mesh: SimplexMesh<D>,
    pub holdout: InteriorNodeSet<D>,
    /// Seconds spent in the `geometry` and `operators` stages.
    pub timings: Vec<(&'static str, f64)>,
}

/// Result of one run. Fields of stages that did not run are `None`.
#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    pub case: &'static str,
    pub dim: usize,
    pub delta: f64,
    pub seed: u64,
    pub settings: PipelineSettings,
    pub eps: f64,
    pub boundary_nodes: usize,
    pub layer_nodes: usize,
    pub layer_measure: f64,
    pub params: Option<RegularizationParams>,
    pub measurement_samples: usize,
    pub measurement_fill: f64,
    pub h: Option<Vec<f64>>,
    pub h_true: Vec<f64>,
    pub re_h: Option<f64>,
    pub pair: Option<DensityPair>,
    pub holdout_error: Option<f64>,
    pub sigma: Option<Vec<f64>>,
    pub sigma_true: Vec<f64>,
    pub re_sigma: Option<f64>,
    pub min_grad_u: Option<f64>,
    pub clamped: usize,
    pub center_hits: usize,
    pub ridge: Option<f64>,
    pub ridge_fallback: bool,
    pub completed: Vec<&'static str>,
    pub timings: Vec<(&'static str, f64)>,
}

/// A report together with the error that stopped the run, if any.
#[derive(Debug)]
pub struct RunOutcome {
    pub report: ReconstructionReport,
    pub error: Option<Error>,
}

impl RunOutcome {
    pub fn into_result(self) -> Result<ReconstructionReport> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.report),
        }
    }
}

fn strided<T: Clone>(items: &[T], count: usize) -> Vec<T> {
    let n = items.len();
    let count = count.min(n).max(1);
    (0..count).map(|i| items[i * n / count].clone()).collect()
}

/// Collocation points on the star-mesh shells at radial fractions `k/R`
/// (`k < R`) and conductivity centres on the shells `(k − ½)/R`, so the two
/// sets never meet.
fn sigma_points<const D: usize>(
    case: &ManufacturedCase<D>,
    rings: usize,
    angular: usize,
) -> (Vec<Point<D>>, Vec<Point<D>>) {
    let mesh = case.geom.star_mesh(2 * rings, angular);
    let per_ring = (mesh.points.len() - 1) / (2 * rings);
    let mut colloc = vec![mesh.points[0]];
    let mut centers = Vec::new();
    for k in 1..2 * rings {
        let ring = &mesh.points[1 + (k - 1) * per_ring..1 + k * per_ring];
        if k % 2 == 0 {
            colloc.extend_from_slice(ring);
        } else {
            centers.extend_from_slice(ring);
        }
    }
    (colloc, centers)
}

/// Build the δ-independent parts: grids, nodes, operator blocks and the
/// normal matrix.
pub fn prepare<const D: usize>(case: ManufacturedCase<D>, settings: PipelineSettings) -> Result<Prepared<D>> {
    let eps = settings.eps.unwrap_or(case.eps);
    if !(eps > 0.0) {
        return Err(Error::param("eps", format!("must be positive, got {eps}")));
    }
    let clock = Stopwatch::start();
    let geometry = || -> Result<_> {
        let disc = Discretization::new(case.geom.clone(), settings.resolution);
        let frames: Vec<BoundaryFrame<D>> = disc.grid.params.iter().map(|p| case.geom.frame(*p)).collect();
        let layer = layer_nodes(case.geom.as_ref(), eps, settings.layer_count, settings.node_seed)?;
        let holdout = layer_nodes(
            case.geom.as_ref(),
            eps,
            settings.holdout.max(1),
            settings.node_seed.wrapping_add(1),
        )?;
        let measure = layer_measure(case.geom.as_ref(), &disc.grid, eps);
        let (colloc_pts, centers) = sigma_points(&case, settings.colloc_rings, settings.colloc_angular);
        let colloc = InteriorNodeSet::from_points(case.geom.as_ref(), colloc_pts, eps);
        let mut sigma_centers = centers;
        sigma_centers.extend(frames.iter().step_by(settings.boundary_stride.max(1)).map(|f| f.point));
        let sigma_star: Vec<f64> = frames.iter().map(|f| (case.sigma)(&f.point)).collect();
        let mesh = case.geom.star_mesh(settings.error_rings, settings.error_angular);
        Ok((
            disc,
            frames,
            layer,
            holdout,
            measure,
            colloc,
            SigmaBasis::new(sigma_centers),
            sigma_star,
            mesh,
        ))
    };
    let (disc, frames, layer, holdout, measure, colloc, sigma_basis, sigma_star, mesh) =
        geometry().map_err(|e| e.at_stage("geometry"))?;
    let t_geometry = clock.seconds();
    let clock = Stopwatch::start();
    let drm = DrmBasis::new(strided(&layer.nodes, settings.drm_centers));
    let blocks =
        OperatorBlocks::assemble(&disc, &layer, &drm, settings.rim, measure).map_err(|e| e.at_stage("operators"))?;
    let system = TikhonovSystem::new(&blocks);
    let t_operators = clock.seconds();
    Ok(Prepared {
        case,
        settings,
        eps,
        disc,
        frames,
        layer,
        layer_measure: measure,
        drm,
        blocks,
        system,
        colloc,
        sigma_basis,
        sigma_star,
        mesh,
        holdout,
        timings: vec![("geometry", t_geometry), ("operators", t_operators)],
    })
}

impl<const D: usize> Prepared<D> {
    fn empty_report(&self, delta: f64, seed: u64) -> ReconstructionReport {
        ReconstructionReport {
            case: self.case.name,
            dim: D,
            delta,
            seed,
            settings: self.settings.clone(),
            eps: self.eps,
            boundary_nodes: self.disc.grid.len(),
            layer_nodes: self.layer.len(),
            layer_measure: self.layer_measure,
            params: None,
            measurement_samples: 0,
            measurement_fill: 0.0,
            h: None,
            h_true: self.frames.iter().map(|f| (self.case.h)(&f.point)).collect(),
            re_h: None,
            pair: None,
            holdout_error: None,
            sigma: None,
            sigma_true: self.mesh.points.iter().map(|p| (self.case.sigma)(p)).collect(),
            re_sigma: None,
            min_grad_u: None,
            clamped: 0,
            center_hits: 0,
            ridge: None,
            ridge_fallback: false,
            completed: vec!["geometry", "operators"],
            timings: self.timings.clone(),
        }
    }

    /// Noisy samples at the layer nodes and on a measurement grid of spacing
    /// `α / grid_factor`, drawn from one stream seeded by `seed`.
    pub fn measure(&self, delta: f64, alpha: f64, seed: u64) -> Result<(Vec<f64>, LayerGrid<D>, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let exact: Vec<f64> = self.layer.nodes.iter().map(|x| (self.case.u)(x)).collect();
        let layer = add_noise_with(&exact, delta, &mut rng);
        let grid = LayerGrid::new(self.case.geom.clone(), self.eps, alpha / self.settings.grid_factor)?;
        let samples = grid.sample(|x| (self.case.u)(x));
        let samples = add_noise_with(&samples, delta, &mut rng);
        Ok((layer, grid, samples))
    }

    /// Boundary data `g` at the grid nodes.
    pub fn boundary_g(&self) -> Vec<f64> {
        self.frames.iter().map(|f| self.case.g(f)).collect()
    }
}

/// Step 1 at every boundary node: `∂_νu` by mollification and the trace
/// selected by `mode`.
pub fn step1<const D: usize>(
    frames: &[BoundaryFrame<D>],
    field: &dyn ScalarField<D>,
    rule: &BallRule,
    eps: f64,
    mode: TraceMode,
    exact_u: impl Fn(&Point<D>) -> f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut dnu = Vec::with_capacity(frames.len());
    let mut trace = Vec::with_capacity(frames.len());
    for f in frames {
        dnu.push(mollified_normal_derivative(f, field, rule, eps)?);
        trace.push(match mode {
            TraceMode::Exact => exact_u(&f.point),
            TraceMode::Mollified => mollified_value(f, field, rule, eps)?,
            TraceMode::Interpolated => field.value(&f.point, Some(f.param)),
        });
    }
    Ok((dnu, trace))
}

/// One reconstruction at noise level `delta` with noise seed `seed`.
pub fn run_single<const D: usize>(prep: &Prepared<D>, delta: f64, seed: u64) -> RunOutcome {
    let mut report = prep.empty_report(delta, seed);
    let error = run_stages(prep, delta, seed, &mut report).err();
    RunOutcome { report, error }
}

fn run_stages<const D: usize>(
    prep: &Prepared<D>,
    delta: f64,
    seed: u64,
    report: &mut ReconstructionReport,
) -> Result<()> {
    let case = &prep.case;
    let set = &prep.settings;

    let clock = Stopwatch::start();
    let params = RegularizationParams::resolve(&set.rules, delta, D, prep.eps).map_err(|e| e.at_stage("measure"))?;
    report.params = Some(params);
    let (layer_values, grid, samples) = prep
        .measure(delta, params.alpha, seed)
        .map_err(|e| e.at_stage("measure"))?;
    report.measurement_samples = grid.len();
    report.measurement_fill = grid.fill;
    report.timings.push(("measure", clock.seconds()));
    report.completed.push("measure");

    let clock = Stopwatch::start();
    let g = prep.boundary_g();
    let sigma_b: Vec<f64> = prep.frames.iter().map(|f| (case.sigma)(&f.point)).collect();
    let h = (|| -> Result<_> {
        let field = ExtendedField::new(&grid, &samples, params.alpha)?;
        let rule = BallRule::resolving(Mollifier::new(D, params.alpha)?, set.grid_factor);
        let (dnu, trace) = step1(&prep.frames, &field, &rule, prep.eps, set.trace, case.u)?;
        let h = recover_h(&g, &sigma_b, &trace, &dnu)?;
        Ok((h, trace))
    })()
    .map_err(|e| e.at_stage("step1-h"))?;
    let (h, trace) = h;
    let re_h = relative_error_boundary(&h, &report.h_true, &prep.disc.grid).map_err(|e| e.at_stage("step1-h"))?;
    report.h = Some(h.clone());
    report.re_h = Some(re_h);
    report.timings.push(("step1-h", clock.seconds()));
    report.completed.push("step1-h");

    let clock = Stopwatch::start();
    let pair = (|| -> Result<_> {
        let rhs = boundary_rhs(&g, &h, &sigma_b, &trace)?;
        prep.system.solve(&layer_values, &rhs, params.beta)
    })()
    .map_err(|e| e.at_stage("step2a-density"))?;
    report.pair = Some(pair.clone());
    report.timings.push(("step2a-density", clock.seconds()));
    report.completed.push("step2a-density");

    let clock = Stopwatch::start();
    let field: SigmaField<D> = (|| -> Result<_> {
        let boundary: Vec<Point<D>> = prep.frames.iter().map(|f| f.point).collect();
        let sys = assemble_transport_system(
            &pair,
            &prep.drm,
            &prep.disc,
            &prep.sigma_basis,
            &prep.colloc,
            &boundary,
            &prep.sigma_star,
        )?;
        report.min_grad_u = Some(sys.min_grad_u);
        report.center_hits = sys.center_hits;
        solve_sigma(&sys, &prep.sigma_basis, set.lambda_s)
    })()
    .map_err(|e| e.at_stage("step2b-sigma"))?;
    let (sigma, clamped) = field.evaluate(&prep.mesh.points);
    report.clamped = clamped;
    report.ridge = Some(field.ridge);
    report.ridge_fallback = field.ridge_fallback;
    report.timings.push(("step2b-sigma", clock.seconds()));
    report.completed.push("step2b-sigma");

    let clock = Stopwatch::start();
    let metrics = (|| -> Result<_> {
        let re_sigma = relative_error_domain(&sigma, &report.sigma_true, &prep.mesh)?;
        let mut worst: f64 = 0.0;
        for x in &prep.holdout.nodes {
            let u = (case.u)(x);
            let rep = evaluate_representation(&pair, x, &prep.drm, &prep.disc)?;
            worst = worst.max(((rep - u) / u).abs());
        }
        Ok((re_sigma, worst))
    })()
    .map_err(|e| e.at_stage("metrics"))?;
    report.sigma = Some(sigma);
    report.re_sigma = Some(metrics.0);
    report.holdout_error = Some(metrics.1);
    report.timings.push(("metrics", clock.seconds()));
    report.completed.push("metrics");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::case_heart_2d;

    fn small() -> PipelineSettings {
        PipelineSettings {
            resolution: 48,
            layer_count: 48,
            drm_centers: 48,
            colloc_rings: 4,
            colloc_angular: 24,
            error_rings: 6,
            error_angular: 32,
            holdout: 4,
            grid_factor: 4.0,
            ..PipelineSettings::defaults(2)
        }
    }

    #[test]
    fn sigma_points_are_disjoint() {
        let (c, s) = sigma_points(&case_heart_2d(), 3, 16);
        assert_eq!(c.len(), 1 + 2 * 16);
        assert_eq!(s.len(), 3 * 16);
        for p in &c {
            assert!(s.iter().all(|q| (p - q).norm() > 1e-6));
        }
    }

    #[test]
    fn small_run_completes_and_is_deterministic() {
        let prep = prepare(case_heart_2d(), small()).unwrap();
        let a = run_single(&prep, 0.01, 3).into_result().unwrap();
        let b = run_single(&prep, 0.01, 3).into_result().unwrap();
        assert_eq!(a.completed.len(), STAGES.len());
        assert_eq!(a.h, b.h);
        assert_eq!(a.sigma, b.sigma);
        assert!(
            a.re_h.unwrap() < 0.5 && a.re_sigma.unwrap() < 0.5,
            "{:?} {:?}",
            a.re_h,
            a.re_sigma
        );
    }

    #[test]
    fn failing_stage_is_tagged_and_report_is_partial() {
        let mut s = small();
        s.rules.alpha = Some(0.004);
        s.grid_factor = 0.5;
        let prep = prepare(case_heart_2d(), s).unwrap();
        let out = run_single(&prep, 0.01, 1);
        let err = out.error.expect("coarse grid must fail the coverage check");
        assert_eq!(err.stage(), Some("step1-h"));
        assert!(out.report.params.is_some());
        assert!(out.report.h.is_none());
    }
}
