//! Versioned JSON persistence for built tests.
//!
//! Every real number is written as a 17-significant-digit decimal string, so
//! parsing recovers the exact bits and save → load → save produces
//! byte-identical files. Derived structures (bounding boxes, detector affine
//! forms, family separation) are recomputed deterministically on load, and
//! all construction-time validation is re-run.

use super::{
    Cell, CellKind, CutPolicy, HypothesisFamily, Schedule, SequentialTest, StageComponent,
};
use crate::convexgeom::ConvexBody;
use crate::error::{Error, Result};
use crate::multitest::{ClosenessMatrix, DetectorTable, RiskMatrix, ShiftMatrix};
use crate::pairwise::detector_from_parts;
use crate::schemes::{Scheme, SchemeKind};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Schema tag accepted by this reader/writer.
pub const FORMAT_TAG: &str = "v1";

fn fmt_real(x: f64) -> Result<String> {
    if !x.is_finite() {
        return Err(Error::InputError(format!(
            "cannot persist non-finite value {x}"
        )));
    }
    Ok(format!("{x:.16e}"))
}

fn parse_real(s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::InputError(format!("malformed real number {s:?}")))?;
    if !v.is_finite() {
        return Err(Error::InputError(format!(
            "non-finite real number {s:?} in stored test"
        )));
    }
    Ok(v)
}

fn fmt_vec(xs: &[f64]) -> Result<Vec<String>> {
    xs.iter().map(|&x| fmt_real(x)).collect()
}

fn parse_vec(xs: &[String]) -> Result<Vec<f64>> {
    xs.iter().map(|s| parse_real(s)).collect()
}

fn fmt_mat(rows: &[Vec<f64>]) -> Result<Vec<Vec<String>>> {
    rows.iter().map(|r| fmt_vec(r)).collect()
}

fn parse_mat(rows: &[Vec<String>]) -> Result<Vec<Vec<f64>>> {
    rows.iter().map(|r| parse_vec(r)).collect()
}

#[derive(Serialize, Deserialize)]
struct SchemeDto {
    kind: SchemeKind,
    n: usize,
}

#[derive(Serialize, Deserialize)]
enum BodyDto {
    #[serde(rename = "box")]
    Box {
        lower: Vec<String>,
        upper: Vec<String>,
    },
    #[serde(rename = "polytope")]
    Polytope {
        a: Vec<Vec<String>>,
        b: Vec<String>,
        simplex_restricted: bool,
    },
}

fn body_to_dto(body: &ConvexBody) -> Result<BodyDto> {
    Ok(match body {
        ConvexBody::Box { lower, upper } => BodyDto::Box {
            lower: fmt_vec(lower)?,
            upper: fmt_vec(upper)?,
        },
        ConvexBody::Polytope {
            a,
            b,
            simplex_restricted,
            ..
        } => BodyDto::Polytope {
            a: fmt_mat(&a.to_rows())?,
            b: fmt_vec(b)?,
            simplex_restricted: *simplex_restricted,
        },
    })
}

fn body_from_dto(dto: &BodyDto) -> Result<ConvexBody> {
    match dto {
        BodyDto::Box { lower, upper } => ConvexBody::new_box(parse_vec(lower)?, parse_vec(upper)?),
        BodyDto::Polytope {
            a,
            b,
            simplex_restricted,
        } => ConvexBody::polytope_flagged(parse_mat(a)?, parse_vec(b)?, *simplex_restricted),
    }
}

#[derive(Serialize, Deserialize)]
enum CellKindDto {
    #[serde(rename = "good")]
    Good,
    #[serde(rename = "bad")]
    Bad { opponent: usize },
}

#[derive(Serialize, Deserialize)]
struct CellDto {
    body: BodyDto,
    origin: usize,
    color: usize,
    kind: CellKindDto,
}

#[derive(Serialize, Deserialize)]
struct DetectorDto {
    q: usize,
    qp: usize,
    mu_star: Vec<String>,
    nu_star: Vec<String>,
    shift: String,
    risk_log: String,
}

#[derive(Serialize, Deserialize)]
struct StageDto {
    s: usize,
    eps_s: String,
    r_s: String,
    delta_s: String,
    kbar_s: u64,
    k_s: u64,
    cells: Vec<CellDto>,
    risks: Vec<Vec<String>>,
    closeness: Vec<Vec<u8>>,
    shifts: Vec<Vec<String>>,
    detectors: Vec<DetectorDto>,
}

#[derive(Serialize, Deserialize)]
struct ScheduleDto {
    stages: usize,
    eps_s: String,
    r: Vec<String>,
    delta: Vec<String>,
    kbar: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct TestDto {
    format: String,
    scheme: SchemeDto,
    bodies: Vec<BodyDto>,
    colors: Vec<usize>,
    cut_policy: CutPolicy,
    schedule: ScheduleDto,
    stages: Vec<StageDto>,
}

fn stage_to_dto(stage: &StageComponent) -> Result<StageDto> {
    let l = stage.cells.len();
    let cells = stage
        .cells
        .iter()
        .map(|c| {
            Ok(CellDto {
                body: body_to_dto(&c.body)?,
                origin: c.origin,
                color: c.color,
                kind: match c.kind {
                    CellKind::Good => CellKindDto::Good,
                    CellKind::Bad { opponent } => CellKindDto::Bad { opponent },
                },
            })
        })
        .collect::<Result<_>>()?;
    let risks = (0..l)
        .map(|i| (0..l).map(|j| fmt_real(stage.risks.get(i, j))).collect())
        .collect::<Result<_>>()?;
    let closeness = (0..l)
        .map(|i| {
            (0..l)
                .map(|j| u8::from(i != j && stage.closeness.separated(i, j)))
                .collect()
        })
        .collect();
    let shifts = (0..l)
        .map(|i| {
            (0..l)
                .map(|j| fmt_real(stage.detectors.shifts().get(i, j)))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut detectors = Vec::new();
    for q in 0..l {
        for qp in q + 1..l {
            if let Some(det) = stage.detectors.pair(q, qp) {
                detectors.push(DetectorDto {
                    q,
                    qp,
                    mu_star: fmt_vec(&det.mu_star)?,
                    nu_star: fmt_vec(&det.nu_star)?,
                    shift: fmt_real(det.shift)?,
                    risk_log: fmt_real(det.risk_log)?,
                });
            }
        }
    }
    Ok(StageDto {
        s: stage.s,
        eps_s: fmt_real(stage.eps_s)?,
        r_s: fmt_real(stage.r_s)?,
        delta_s: fmt_real(stage.delta_s)?,
        kbar_s: stage.kbar_s,
        k_s: stage.k_s,
        cells,
        risks,
        closeness,
        shifts,
        detectors,
    })
}

fn stage_from_dto(dto: &StageDto, scheme: &Scheme, num_bodies: usize) -> Result<StageComponent> {
    let l = dto.cells.len();
    let mut cells = Vec::with_capacity(l);
    for c in &dto.cells {
        if c.origin >= num_bodies {
            return Err(Error::InputError(format!(
                "stored cell references body {} but the family has {num_bodies}",
                c.origin
            )));
        }
        cells.push(Cell {
            body: body_from_dto(&c.body)?,
            origin: c.origin,
            color: c.color,
            kind: match c.kind {
                CellKindDto::Good => CellKind::Good,
                CellKindDto::Bad { opponent } => CellKind::Bad { opponent },
            },
        });
    }
    let risks = RiskMatrix::new(parse_mat(&dto.risks)?)?;
    let closeness = ClosenessMatrix::new(dto.closeness.clone())?;
    let shifts = ShiftMatrix::new(parse_mat(&dto.shifts)?)?;
    if risks.n() != l || closeness.n() != l || shifts.n() != l {
        return Err(Error::InputError(format!(
            "stored stage {} matrices do not match its {l} cells",
            dto.s
        )));
    }
    let mut detectors = DetectorTable::new(l, dto.k_s as usize, shifts)?;
    for d in &dto.detectors {
        detectors.set_pair(
            d.q,
            d.qp,
            detector_from_parts(
                scheme,
                parse_vec(&d.mu_star)?,
                parse_vec(&d.nu_star)?,
                parse_real(&d.shift)?,
                parse_real(&d.risk_log)?,
            )?,
        )?;
    }
    Ok(StageComponent {
        s: dto.s,
        eps_s: parse_real(&dto.eps_s)?,
        r_s: parse_real(&dto.r_s)?,
        delta_s: parse_real(&dto.delta_s)?,
        kbar_s: dto.kbar_s,
        cells,
        risks,
        closeness,
        detectors,
        k_s: dto.k_s,
    })
}

/// Serializes a built test to the versioned JSON format.
pub fn to_json(test: &SequentialTest) -> Result<String> {
    let dto = TestDto {
        format: FORMAT_TAG.to_string(),
        scheme: SchemeDto {
            kind: test.family.scheme().kind,
            n: test.family.scheme().dim(),
        },
        bodies: test
            .family
            .bodies()
            .iter()
            .map(body_to_dto)
            .collect::<Result<_>>()?,
        colors: test.family.colors().to_vec(),
        cut_policy: test.cut_policy,
        schedule: ScheduleDto {
            stages: test.schedule.stages,
            eps_s: fmt_real(test.schedule.eps_s)?,
            r: fmt_vec(&test.schedule.r)?,
            delta: fmt_vec(&test.schedule.delta)?,
            kbar: test.schedule.kbar.clone(),
        },
        stages: test.stages.iter().map(stage_to_dto).collect::<Result<_>>()?,
    };
    Ok(serde_json::to_string_pretty(&dto)?)
}

/// Reads a test back from its JSON form, re-running all construction-time
/// validation.
pub fn from_json(s: &str) -> Result<SequentialTest> {
    let dto: TestDto = serde_json::from_str(s)?;
    if dto.format != FORMAT_TAG {
        return Err(Error::InputError(format!(
            "unsupported test format {:?} (this reader handles {FORMAT_TAG:?})",
            dto.format
        )));
    }
    let scheme = Scheme::new(dto.scheme.kind, dto.scheme.n)?;
    let bodies = dto
        .bodies
        .iter()
        .map(body_from_dto)
        .collect::<Result<Vec<_>>>()?;
    let family = HypothesisFamily::new(scheme, bodies, dto.colors.clone())?;
    let schedule = Schedule {
        stages: dto.schedule.stages,
        eps_s: parse_real(&dto.schedule.eps_s)?,
        r: parse_vec(&dto.schedule.r)?,
        delta: parse_vec(&dto.schedule.delta)?,
        kbar: dto.schedule.kbar.clone(),
    };
    if schedule.r.len() != schedule.stages
        || schedule.delta.len() != schedule.stages
        || schedule.kbar.len() != schedule.stages
    {
        return Err(Error::InputError(
            "stored schedule arrays do not match its stage count".into(),
        ));
    }
    let stages = dto
        .stages
        .iter()
        .map(|s| stage_from_dto(s, &scheme, family.num_bodies()))
        .collect::<Result<Vec<_>>>()?;
    for pair in stages.windows(2) {
        if pair[0].k_s > pair[1].k_s {
            return Err(Error::InputError(
                "stored stages are not in execution order".into(),
            ));
        }
    }
    Ok(SequentialTest {
        family,
        schedule,
        cut_policy: dto.cut_policy,
        stages,
    })
}

/// Writes the JSON form to a file.
pub fn save_test(test: &SequentialTest, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_json(test)?)?;
    Ok(())
}

/// Loads a test previously written by `save_test`.
pub fn load_test(path: impl AsRef<Path>) -> Result<SequentialTest> {
    from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequential::{build_sequential, run_sequential, ScheduleConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_test() -> SequentialTest {
        let scheme = Scheme::new(SchemeKind::Gaussian, 1).unwrap();
        let family = HypothesisFamily::new(
            scheme,
            vec![
                ConvexBody::new_box(vec![0.0], vec![1.0]).unwrap(),
                ConvexBody::new_box(vec![2.0], vec![3.0]).unwrap(),
            ],
            vec![0, 1],
        )
        .unwrap();
        build_sequential(family, &ScheduleConfig::new(0.1)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_stable_and_byte_stable() {
        let test = small_test();
        let j1 = to_json(&test).unwrap();
        let back = from_json(&j1).unwrap();
        assert_eq!(back, test);
        let j2 = to_json(&back).unwrap();
        assert_eq!(j1, j2);
    }

    #[test]
    fn verdicts_survive_a_round_trip() {
        let test = small_test();
        let back = from_json(&to_json(&test).unwrap()).unwrap();
        let scheme = *test.family.scheme();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let stream = scheme
            .sample(&[0.4], &mut rng, test.max_observations() as usize)
            .unwrap();
        let v1 = run_sequential(&test, &stream, true).unwrap();
        let v2 = run_sequential(&back, &stream, true).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(v1.accepted_color, Some(0));
    }

    #[test]
    fn file_round_trip_matches_in_memory_form() {
        let test = small_test();
        let dir = std::env::temp_dir().join(format!("seqtest-persist-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("test.json");
        save_test(&test, &path).unwrap();
        let back = load_test(&path).unwrap();
        assert_eq!(back, test);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn malformed_documents_are_rejected() {
        assert!(from_json("{").is_err());
        let test = small_test();
        let j = to_json(&test).unwrap();
        let wrong_tag = j.replacen("\"v1\"", "\"v0\"", 1);
        assert!(matches!(
            from_json(&wrong_tag),
            Err(Error::InputError(msg)) if msg.contains("format")
        ));
        // Corrupting one stored real must fail parsing, not silently load.
        let corrupted = j.replacen("e0\"", "e0x\"", 1);
        assert!(from_json(&corrupted).is_err());
    }
}
