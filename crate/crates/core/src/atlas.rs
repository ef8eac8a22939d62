//! Capability surfaces: binned success-rate grids over pairs of structural
//! difficulty axes, with transition-frontier detection and CSV/SVG emission.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use thiserror::Error;

use crate::evaluate::decimal_ndp;
use crate::harness::EvaluationRecord;
use crate::store::{InstanceRecord, ProfileRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisKind {
    /// Canonical-solve wall time — a model-independent difficulty axis.
    ExecTime,
    ExprComplexity,
    ReasoningDepth,
    StateSpace,
}

impl AxisKind {
    pub fn parse(s: &str) -> Option<AxisKind> {
        match s {
            "exec_time" => Some(AxisKind::ExecTime),
            "expr_complexity" => Some(AxisKind::ExprComplexity),
            "reasoning_depth" => Some(AxisKind::ReasoningDepth),
            "state_space" => Some(AxisKind::StateSpace),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AxisKind::ExecTime => "exec_time",
            AxisKind::ExprComplexity => "expr_complexity",
            AxisKind::ReasoningDepth => "reasoning_depth",
            AxisKind::StateSpace => "state_space",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AxisKind::ExecTime => "execution time (ms)",
            AxisKind::ExprComplexity => "expression complexity",
            AxisKind::ReasoningDepth => "reasoning depth",
            AxisKind::StateSpace => "state space (log2)",
        }
    }
}

impl fmt::Display for AxisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum AtlasError {
    #[error("record references unknown instance hash {0}")]
    UnknownInstanceHash(String),
    #[error("axis exec_time needs a solver profile for instance {0}")]
    MissingProfile(String),
    #[error("records span multiple model ids ({0} and {1}); aggregate one model at a time")]
    MixedModels(String, String),
    #[error("cannot build a surface over an empty instance population")]
    EmptyPopulation,
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SurfaceCell {
    pub attempts: u64,
    pub successes: u64,
}

impl SurfaceCell {
    pub fn rate(&self) -> Option<BigRational> {
        if self.attempts == 0 {
            None
        } else {
            Some(BigRational::new(
                BigInt::from(self.successes),
                BigInt::from(self.attempts),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapabilitySurface {
    pub model_id: String,
    pub axis_x: AxisKind,
    pub axis_y: AxisKind,
    /// Quantile bin edges; `edges.len() - 1` bins per axis (a degenerate
    /// axis has two equal edges and one bin).
    pub x_edges: Vec<BigRational>,
    pub y_edges: Vec<BigRational>,
    /// `cells[xi][yi]`.
    pub cells: Vec<Vec<SurfaceCell>>,
}

impl CapabilitySurface {
    pub fn x_bins(&self) -> usize {
        self.x_edges.len().saturating_sub(1).max(1)
    }

    pub fn y_bins(&self) -> usize {
        self.y_edges.len().saturating_sub(1).max(1)
    }

    pub fn rate(&self, xi: usize, yi: usize) -> Option<BigRational> {
        self.cells[xi][yi].rate()
    }
}

fn axis_value(
    axis: AxisKind,
    inst: &InstanceRecord,
    profiles: &BTreeMap<String, u64>,
) -> Result<BigRational, AtlasError> {
    let int = |n: u64| BigRational::from(BigInt::from(n));
    Ok(match axis {
        AxisKind::ExecTime => {
            let ms = profiles
                .get(&inst.instance_hash)
                .ok_or_else(|| AtlasError::MissingProfile(inst.instance_hash.clone()))?;
            int(*ms)
        }
        AxisKind::ExprComplexity => int(inst.descriptor.expr_size),
        AxisKind::ReasoningDepth => int(inst.descriptor.ell as u64),
        AxisKind::StateSpace => inst.descriptor.state_space_log2.clone(),
    })
}

/// Index of the half-open bin `[eᵢ, eᵢ₊₁)` containing `v` (last bin closed).
fn bin_index(edges: &[BigRational], v: &BigRational) -> usize {
    let bins = edges.len().saturating_sub(1).max(1);
    let mut idx = 0;
    for (j, edge) in edges.iter().enumerate().skip(1) {
        if v >= edge {
            idx = j;
        }
    }
    idx.min(bins - 1)
}

/// Bin every record's instance into a 2-D grid whose edges are quantiles of
/// the instance population (not of the records), so surfaces for different
/// models over the same instances share edges exactly.
pub fn aggregate_surface(
    records: &[EvaluationRecord],
    instances: &[InstanceRecord],
    profiles: &[ProfileRecord],
    axis_x: AxisKind,
    axis_y: AxisKind,
    q: usize,
) -> Result<CapabilitySurface, AtlasError> {
    if instances.is_empty() {
        return Err(AtlasError::EmptyPopulation);
    }
    let mut model_id = String::new();
    for r in records {
        if model_id.is_empty() {
            model_id = r.model_id.clone();
        } else if r.model_id != model_id {
            return Err(AtlasError::MixedModels(model_id, r.model_id.clone()));
        }
    }
    let wall_ms: BTreeMap<String, u64> = profiles
        .iter()
        .map(|p| (p.instance_hash.clone(), p.profile.wall_time_ms))
        .collect();

    let mut coords: BTreeMap<&str, (BigRational, BigRational)> = BTreeMap::new();
    let mut xs = Vec::with_capacity(instances.len());
    let mut ys = Vec::with_capacity(instances.len());
    for inst in instances {
        let x = axis_value(axis_x, inst, &wall_ms)?;
        let y = axis_value(axis_y, inst, &wall_ms)?;
        xs.push(x.clone());
        ys.push(y.clone());
        coords.insert(&inst.instance_hash, (x, y));
    }
    let x_edges = crate::metrics::bin_axis(&xs, q);
    let y_edges = crate::metrics::bin_axis(&ys, q);
    let nx = x_edges.len().saturating_sub(1).max(1);
    let ny = y_edges.len().saturating_sub(1).max(1);
    let mut cells = vec![vec![SurfaceCell::default(); ny]; nx];

    for record in records {
        let (x, y) = coords
            .get(record.instance_hash.as_str())
            .ok_or_else(|| AtlasError::UnknownInstanceHash(record.instance_hash.clone()))?;
        let xi = bin_index(&x_edges, x);
        let yi = bin_index(&y_edges, y);
        cells[xi][yi].attempts += 1;
        if record.correct {
            cells[xi][yi].successes += 1;
        }
    }

    Ok(CapabilitySurface {
        model_id,
        axis_x,
        axis_y,
        x_edges,
        y_edges,
        cells,
    })
}

/// Frontier band: non-missing cells at or above the threshold that touch a
/// non-missing 4-neighbor below it. Row-major order (y outer, x inner).
pub fn detect_transition(
    s: &CapabilitySurface,
    threshold: &BigRational,
) -> Vec<(usize, usize)> {
    let nx = s.x_bins();
    let ny = s.y_bins();
    let mut out = Vec::new();
    for yi in 0..ny {
        for xi in 0..nx {
            let Some(rate) = s.rate(xi, yi) else { continue };
            if rate < *threshold {
                continue;
            }
            let mut neighbors = Vec::new();
            if xi > 0 {
                neighbors.push((xi - 1, yi));
            }
            if xi + 1 < nx {
                neighbors.push((xi + 1, yi));
            }
            if yi > 0 {
                neighbors.push((xi, yi - 1));
            }
            if yi + 1 < ny {
                neighbors.push((xi, yi + 1));
            }
            let on_frontier = neighbors
                .into_iter()
                .filter_map(|(nxi, nyi)| s.rate(nxi, nyi))
                .any(|r| r < *threshold);
            if on_frontier {
                out.push((xi, yi));
            }
        }
    }
    out
}

pub fn default_threshold() -> BigRational {
    BigRational::new(BigInt::from(1), BigInt::from(2))
}

fn trim_decimal(r: &BigRational) -> String {
    decimal_ndp(r, 6)
}

/// White→saturated-red ramp: rate 0 → white, rate 1 → rgb(255,0,0). The
/// green/blue channels are 255·(1−rate), rounded half-up on the exact value.
pub fn ramp_color(rate: &BigRational) -> String {
    let scaled = rate * BigRational::from(BigInt::from(255));
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    let rounded = (scaled + half).floor().to_integer();
    let level = rounded.to_i64().unwrap_or(255).clamp(0, 255);
    let gb = 255 - level;
    format!("rgb(255,{gb},{gb})")
}

pub const MISSING_FILL: &str = "#cccccc";

/// Write `surface.csv` and `surface.svg` under `out_dir`.
///
/// CSV rows iterate x bins in the outer loop, y bins inner; a missing cell
/// has an empty `rate` field. The SVG heatmap fills cells by `ramp_color`,
/// paints missing cells grey, outlines the transition frontier, and labels
/// axes and bin edges.
pub fn emit_artifacts(
    s: &CapabilitySurface,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf), AtlasError> {
    std::fs::create_dir_all(out_dir).map_err(|e| AtlasError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let csv_path = out_dir.join("surface.csv");
    let svg_path = out_dir.join("surface.svg");

    let mut csv = String::from("x_bin,y_bin,x_lo,x_hi,y_lo,y_hi,attempts,successes,rate\n");
    let edge = |edges: &[BigRational], i: usize| -> String {
        if edges.is_empty() {
            String::new()
        } else {
            trim_decimal(&edges[i.min(edges.len() - 1)])
        }
    };
    for xi in 0..s.x_bins() {
        for yi in 0..s.y_bins() {
            let cell = &s.cells[xi][yi];
            let rate = cell
                .rate()
                .map(|r| trim_decimal(&r))
                .unwrap_or_default();
            csv.push_str(&format!(
                "{xi},{yi},{},{},{},{},{},{},{rate}\n",
                edge(&s.x_edges, xi),
                edge(&s.x_edges, xi + 1),
                edge(&s.y_edges, yi),
                edge(&s.y_edges, yi + 1),
                cell.attempts,
                cell.successes,
            ));
        }
    }
    std::fs::write(&csv_path, csv).map_err(|e| AtlasError::Io {
        path: csv_path.clone(),
        source: e,
    })?;

    std::fs::write(&svg_path, render_svg(s)).map_err(|e| AtlasError::Io {
        path: svg_path.clone(),
        source: e,
    })?;
    Ok((csv_path, svg_path))
}

fn render_svg(s: &CapabilitySurface) -> String {
    const CELL: usize = 64;
    const LEFT: usize = 96;
    const TOP: usize = 40;
    const RIGHT: usize = 24;
    const BOTTOM: usize = 84;
    let nx = s.x_bins();
    let ny = s.y_bins();
    let width = LEFT + nx * CELL + RIGHT;
    let height = TOP + ny * CELL + BOTTOM;
    let frontier: std::collections::HashSet<(usize, usize)> =
        detect_transition(s, &default_threshold()).into_iter().collect();

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n\
         <text x=\"{tx}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">success rate — {model}</text>\n",
        tx = LEFT + nx * CELL / 2,
        model = xml_escape(&s.model_id),
    );

    // Cells: y bins grow upward, so bin yi is drawn at row (ny - 1 - yi).
    for xi in 0..nx {
        for yi in 0..ny {
            let px = LEFT + xi * CELL;
            let py = TOP + (ny - 1 - yi) * CELL;
            let fill = match s.rate(xi, yi) {
                Some(rate) => ramp_color(&rate),
                None => MISSING_FILL.to_string(),
            };
            svg.push_str(&format!(
                "<rect x=\"{px}\" y=\"{py}\" width=\"{CELL}\" height=\"{CELL}\" \
                 fill=\"{fill}\" stroke=\"#ffffff\" stroke-width=\"1\"/>\n"
            ));
        }
    }
    // Frontier outlines drawn after fills so they stay visible.
    for &(xi, yi) in frontier.iter() {
        let px = LEFT + xi * CELL;
        let py = TOP + (ny - 1 - yi) * CELL;
        svg.push_str(&format!(
            "<rect x=\"{px}\" y=\"{py}\" width=\"{CELL}\" height=\"{CELL}\" \
             fill=\"none\" stroke=\"#1f2937\" stroke-width=\"3\" class=\"frontier\"/>\n"
        ));
    }

    // Bin-edge tick labels.
    if !s.x_edges.is_empty() {
        for (i, e) in s.x_edges.iter().enumerate() {
            let px = LEFT + i.min(nx) * CELL;
            svg.push_str(&format!(
                "<text x=\"{px}\" y=\"{y}\" text-anchor=\"middle\">{}</text>\n",
                xml_escape(&trim_decimal(e)),
                y = TOP + ny * CELL + 18,
            ));
        }
    }
    if !s.y_edges.is_empty() {
        for (i, e) in s.y_edges.iter().enumerate() {
            let py = TOP + (ny - i.min(ny)) * CELL;
            svg.push_str(&format!(
                "<text x=\"{x}\" y=\"{py}\" text-anchor=\"end\" dominant-baseline=\"middle\">{}</text>\n",
                xml_escape(&trim_decimal(e)),
                x = LEFT - 8,
            ));
        }
    }

    // Axis labels.
    svg.push_str(&format!(
        "<text x=\"{x}\" y=\"{y}\" text-anchor=\"middle\">{}</text>\n",
        xml_escape(s.axis_x.label()),
        x = LEFT + nx * CELL / 2,
        y = TOP + ny * CELL + 48,
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{y}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {y})\">{}</text>\n",
        xml_escape(s.axis_y.label()),
        y = TOP + ny * CELL / 2,
    ));
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::AnswerValue;
    use num_traits::Zero;
    use crate::metrics::StructuralDescriptor;
    use crate::solver::SolverProfile;

    fn inst(hash: &str, expr_size: u64, ell: u32) -> InstanceRecord {
        InstanceRecord {
            family_id: "fam".into(),
            param_values: BTreeMap::new(),
            prompt: format!("p-{hash}"),
            canonical_answer: AnswerValue::Int(BigInt::from(1)),
            descriptor: StructuralDescriptor {
                c: 1,
                d: 0,
                kappa: 0,
                ell,
                expr_size,
                state_space_log2: BigRational::from(BigInt::from(expr_size)),
            },
            instance_hash: hash.into(),
        }
    }

    fn record(hash: &str, model: &str, rep: u32, correct: bool) -> EvaluationRecord {
        EvaluationRecord {
            instance_hash: hash.into(),
            model_id: model.into(),
            repetition_index: rep,
            raw_response: String::new(),
            parsed_answer: None,
            correct,
            tokens_in: 1,
            tokens_out: 1,
            latency_ms: 1,
            timestamp: String::new(),
        }
    }

    fn fixture() -> (Vec<InstanceRecord>, Vec<EvaluationRecord>) {
        // Two structural groups: (expr 3, ell 1) and (expr 9, ell 2).
        let instances = vec![
            inst("aaaa", 3, 1),
            inst("bbbb", 3, 1),
            inst("cccc", 9, 2),
            inst("dddd", 9, 2),
        ];
        let mut records = Vec::new();
        for rep in 0..10 {
            records.push(record("aaaa", "m", rep, true));
            records.push(record("bbbb", "m", rep, true));
            records.push(record("cccc", "m", rep, false));
            records.push(record("dddd", "m", rep, false));
        }
        (instances, records)
    }

    #[test]
    fn hand_countable_surface_rates() {
        let (instances, records) = fixture();
        let s = aggregate_surface(
            &records,
            &instances,
            &[],
            AxisKind::ExprComplexity,
            AxisKind::ReasoningDepth,
            2,
        )
        .unwrap();
        assert_eq!(s.x_bins(), 2);
        assert_eq!(s.y_bins(), 2);
        assert_eq!(s.rate(0, 0), Some(BigRational::from(BigInt::from(1))));
        assert_eq!(s.rate(1, 1), Some(BigRational::zero()));
        assert_eq!(s.rate(0, 1), None);
        assert_eq!(s.rate(1, 0), None);

        // Conservation: every record lands in exactly one cell.
        let attempts: u64 = s.cells.iter().flatten().map(|c| c.attempts).sum();
        let successes: u64 = s.cells.iter().flatten().map(|c| c.successes).sum();
        assert_eq!(attempts, records.len() as u64);
        assert_eq!(
            successes,
            records.iter().filter(|r| r.correct).count() as u64
        );
    }

    #[test]
    fn single_record_gives_single_live_cell() {
        let (instances, _) = fixture();
        let records = vec![record("aaaa", "m", 0, true)];
        let s = aggregate_surface(
            &records,
            &instances,
            &[],
            AxisKind::ExprComplexity,
            AxisKind::ReasoningDepth,
            2,
        )
        .unwrap();
        let live: Vec<_> = s
            .cells
            .iter()
            .flatten()
            .filter(|c| c.attempts > 0)
            .collect();
        assert_eq!(live.len(), 1);
        assert_eq!(live[0].rate(), Some(BigRational::from(BigInt::from(1))));
    }

    #[test]
    fn edges_depend_on_instances_not_records() {
        let (instances, records) = fixture();
        let m1: Vec<_> = records
            .iter()
            .filter(|r| r.instance_hash == "aaaa" || r.instance_hash == "bbbb")
            .cloned()
            .collect();
        let m2: Vec<_> = records
            .iter()
            .filter(|r| r.instance_hash == "cccc")
            .cloned()
            .map(|mut r| {
                r.model_id = "other".into();
                r
            })
            .collect();
        let sa = aggregate_surface(&m1, &instances, &[], AxisKind::ExprComplexity, AxisKind::ReasoningDepth, 2).unwrap();
        let sb = aggregate_surface(&m2, &instances, &[], AxisKind::ExprComplexity, AxisKind::ReasoningDepth, 2).unwrap();
        assert_eq!(sa.x_edges, sb.x_edges);
        assert_eq!(sa.y_edges, sb.y_edges);
        assert_ne!(sa.model_id, sb.model_id);
    }

    #[test]
    fn unknown_hash_and_mixed_models_error() {
        let (instances, _) = fixture();
        let err = aggregate_surface(
            &[record("zzzz", "m", 0, true)],
            &instances,
            &[],
            AxisKind::ExprComplexity,
            AxisKind::ReasoningDepth,
            2,
        )
        .unwrap_err();
        assert!(matches!(err, AtlasError::UnknownInstanceHash(h) if h == "zzzz"));

        let err = aggregate_surface(
            &[record("aaaa", "m1", 0, true), record("bbbb", "m2", 0, true)],
            &instances,
            &[],
            AxisKind::ExprComplexity,
            AxisKind::ReasoningDepth,
            2,
        )
        .unwrap_err();
        assert!(matches!(err, AtlasError::MixedModels(..)));
    }

    #[test]
    fn exec_time_axis_requires_profiles() {
        let (instances, records) = fixture();
        let err = aggregate_surface(
            &records,
            &instances,
            &[],
            AxisKind::ExecTime,
            AxisKind::ReasoningDepth,
            2,
        )
        .unwrap_err();
        assert!(matches!(err, AtlasError::MissingProfile(_)));

        let profiles: Vec<ProfileRecord> = instances
            .iter()
            .enumerate()
            .map(|(k, i)| ProfileRecord {
                instance_hash: i.instance_hash.clone(),
                profile: SolverProfile {
                    expr_size_emitted: 1,
                    reasoning_depth: 1,
                    wall_time_ms: (k as u64 + 1) * 10,
                    peak_memory_kb: None,
                    solver_id: "builtin".into(),
                    model_count_explored: None,
                },
            })
            .collect();
        let s = aggregate_surface(
            &records,
            &instances,
            &profiles,
            AxisKind::ExecTime,
            AxisKind::ReasoningDepth,
            2,
        )
        .unwrap();
        let attempts: u64 = s.cells.iter().flatten().map(|c| c.attempts).sum();
        assert_eq!(attempts, 40);
    }

    fn hand_surface(rates: &[&[Option<(u64, u64)>]]) -> CapabilitySurface {
        // rates[yi][xi] = Some((successes, attempts)); rows listed top-down
        // here for readability, stored bottom-up.
        let ny = rates.len();
        let nx = rates[0].len();
        let edge = |k: usize| BigRational::from(BigInt::from(k as i64));
        let mut cells = vec![vec![SurfaceCell::default(); ny]; nx];
        for (row, cols) in rates.iter().enumerate() {
            let yi = ny - 1 - row;
            for (xi, entry) in cols.iter().enumerate() {
                if let Some((successes, attempts)) = entry {
                    cells[xi][yi] = SurfaceCell {
                        attempts: *attempts,
                        successes: *successes,
                    };
                }
            }
        }
        CapabilitySurface {
            model_id: "m".into(),
            axis_x: AxisKind::ExprComplexity,
            axis_y: AxisKind::ReasoningDepth,
            x_edges: (0..=nx).map(edge).collect(),
            y_edges: (0..=ny).map(edge).collect(),
            cells,
        }
    }

    #[test]
    fn transition_frontier_rule() {
        // [[1.0, 1.0],
        //  [1.0, 0.0]] — top row is higher y bin.
        let s = hand_surface(&[
            &[Some((10, 10)), Some((10, 10))],
            &[Some((10, 10)), Some((0, 10))],
        ]);
        let frontier = detect_transition(&s, &default_threshold());
        assert_eq!(frontier, vec![(0, 0), (1, 1)]);

        let uniform = hand_surface(&[
            &[Some((10, 10)), Some((10, 10))],
            &[Some((10, 10)), Some((10, 10))],
        ]);
        assert!(detect_transition(&uniform, &default_threshold()).is_empty());

        // A missing corner is never on the frontier and never drags a
        // neighbor onto it.
        let missing = hand_surface(&[
            &[Some((10, 10)), None],
            &[Some((10, 10)), Some((10, 10))],
        ]);
        assert!(detect_transition(&missing, &default_threshold()).is_empty());
    }

    #[test]
    fn csv_has_exact_header_and_empty_missing_rates() {
        let (instances, records) = fixture();
        let s = aggregate_surface(&records, &instances, &[], AxisKind::ExprComplexity, AxisKind::ReasoningDepth, 2).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let (csv_path, svg_path) = emit_artifacts(&s, tmp.path()).unwrap();
        let csv = std::fs::read_to_string(&csv_path).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "x_bin,y_bin,x_lo,x_hi,y_lo,y_hi,attempts,successes,rate"
        );
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 4);
        // Missing cells end with an empty rate field.
        let missing: Vec<&&str> = rows.iter().filter(|r| r.ends_with(',')).collect();
        assert_eq!(missing.len(), 2);
        // Attempts column conserves the record count.
        let attempts: u64 = rows
            .iter()
            .map(|r| r.split(',').nth(6).unwrap().parse::<u64>().unwrap())
            .sum();
        assert_eq!(attempts, 40);

        // Determinism: emitting again yields identical bytes.
        let again = tempfile::tempdir().unwrap();
        let (csv2, _) = emit_artifacts(&s, again.path()).unwrap();
        assert_eq!(csv, std::fs::read_to_string(csv2).unwrap());
        assert!(svg_path.exists());
    }

    #[test]
    fn svg_fills_match_ramp_and_outline_frontier() {
        let s = hand_surface(&[
            &[Some((10, 10)), Some((5, 10))],
            &[Some((10, 10)), None],
        ]);
        let svg = render_svg(&s);
        assert!(svg.contains(&format!("fill=\"{}\"", ramp_color(&BigRational::from(BigInt::from(1))))));
        assert!(svg.contains("fill=\"rgb(255,127,127)\"")); // rate 1/2
        assert!(svg.contains(&format!("fill=\"{MISSING_FILL}\"")));
        let outlines = svg.matches("class=\"frontier\"").count();
        assert_eq!(outlines, detect_transition(&s, &default_threshold()).len());
        assert!(svg.contains("state space") || svg.contains("reasoning depth"));
    }

    #[test]
    fn ramp_endpoints_and_midpoint() {
        let r = |p: i64, q: i64| BigRational::new(BigInt::from(p), BigInt::from(q));
        assert_eq!(ramp_color(&r(0, 1)), "rgb(255,255,255)");
        assert_eq!(ramp_color(&r(1, 1)), "rgb(255,0,0)");
        // 255/2 = 127.5 rounds half-up to 128 → channels 255-128 = 127.
        assert_eq!(ramp_color(&r(1, 2)), "rgb(255,127,127)");
    }
}
