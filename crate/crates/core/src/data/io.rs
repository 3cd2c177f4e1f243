use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    DataError, Dataset, FixationEvent, GazeSample, QuestionnaireAnswer, ScreeningPolicy, TrialKey, TrialRecord,
    ACTIVE_COUNTS, MAX_ESTIMATE_S, PLANNED_DURATIONS,
};

pub const GAZE_COLUMNS: [&str; 11] = [
    "participant_id",
    "trial_id",
    "phase",
    "timestamp_s",
    "pupil_x_norm",
    "pupil_y_norm",
    "diam2d_left_px",
    "diam2d_right_px",
    "diam3d_left_mm",
    "diam3d_right_mm",
    "confidence",
];
pub const FIXATION_COLUMNS: [&str; 9] = [
    "participant_id",
    "trial_id",
    "phase",
    "fixation_id",
    "start_s",
    "duration_s",
    "dispersion_deg",
    "fix_x_norm",
    "fix_y_norm",
];
pub const TRIAL_COLUMNS: [&str; 4] = ["participant_id", "trial_id", "planned_duration_s", "n_active"];
pub const QUESTIONNAIRE_COLUMNS: [&str; 4] = ["participant_id", "trial_id", "estimated_duration_s", "ppot_likert"];

/// Locations of the four input tables.
#[derive(Debug, Clone)]
pub struct DataPaths {
    pub gaze: PathBuf,
    pub fixations: PathBuf,
    pub trials: PathBuf,
    pub questionnaire: PathBuf,
}

impl DataPaths {
    /// The conventional file names inside one directory.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            gaze: dir.join("gaze.csv"),
            fixations: dir.join("fixations.csv"),
            trials: dir.join("trials.csv"),
            questionnaire: dir.join("questionnaire.csv"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Phase {
    Experiment,
    Baseline,
}

#[derive(Debug, Serialize, Deserialize)]
struct GazeRow {
    participant_id: String,
    trial_id: String,
    phase: Phase,
    timestamp_s: f64,
    pupil_x_norm: f64,
    pupil_y_norm: f64,
    diam2d_left_px: f64,
    diam2d_right_px: f64,
    diam3d_left_mm: f64,
    diam3d_right_mm: f64,
    confidence: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct FixationRow {
    participant_id: String,
    trial_id: String,
    phase: Phase,
    fixation_id: u64,
    start_s: f64,
    duration_s: f64,
    dispersion_deg: f64,
    fix_x_norm: f64,
    fix_y_norm: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrialRow {
    participant_id: String,
    trial_id: String,
    planned_duration_s: u32,
    n_active: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct QuestionnaireRow {
    participant_id: String,
    trial_id: String,
    estimated_duration_s: f64,
    ppot_likert: u8,
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn open(path: &Path) -> Result<File, DataError> {
    if !path.is_file() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    Ok(File::open(path)?)
}

/// Parse every row of a CSV table whose header must contain exactly
/// `columns` (in any order). The callback receives the 1-based line number.
fn for_each_row<T, R, F>(reader: R, file: &str, columns: &[&str], mut f: F) -> Result<(), DataError>
where
    T: DeserializeOwned,
    R: Read,
    F: FnMut(T, u64) -> Result<(), DataError>,
{
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut found: Vec<&str> = headers.iter().collect();
    let mut expected: Vec<&str> = columns.to_vec();
    found.sort_unstable();
    expected.sort_unstable();
    if found != expected {
        return Err(DataError::SchemaMismatch {
            file: file.to_string(),
            expected: columns.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| DataError::RowParse {
            file: file.to_string(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        let row: T = record.deserialize(Some(&headers)).map_err(|e| DataError::RowParse {
            file: file.to_string(),
            line,
            message: e.to_string(),
        })?;
        f(row, line)?;
    }
    Ok(())
}

fn row_error(file: &str, line: u64, message: impl Into<String>) -> DataError {
    DataError::RowParse {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

fn xref_error(file: &str, line: u64, message: impl Into<String>) -> DataError {
    DataError::CrossReference {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

fn check_answer(file: &str, line: u64, row: &QuestionnaireRow) -> Result<QuestionnaireAnswer, DataError> {
    if !(0.0..=MAX_ESTIMATE_S).contains(&row.estimated_duration_s) {
        return Err(row_error(
            file,
            line,
            format!("estimated_duration_s {} outside [0, 600]", row.estimated_duration_s),
        ));
    }
    if !(1..=5).contains(&row.ppot_likert) {
        return Err(row_error(
            file,
            line,
            format!("ppot_likert {} outside 1..5", row.ppot_likert),
        ));
    }
    Ok(QuestionnaireAnswer {
        estimated_duration: row.estimated_duration_s,
        ppot_likert: row.ppot_likert,
    })
}

/// Read questionnaire answers on their own (used when labeling feature tables).
pub fn read_questionnaire(path: &Path) -> Result<BTreeMap<TrialKey, QuestionnaireAnswer>, DataError> {
    let file = file_label(path);
    let mut out = BTreeMap::new();
    for_each_row(
        open(path)?,
        &file,
        &QUESTIONNAIRE_COLUMNS,
        |row: QuestionnaireRow, line| {
            let answer = check_answer(&file, line, &row)?;
            let key = TrialKey::new(row.participant_id, row.trial_id);
            if out.insert(key.clone(), answer).is_some() {
                return Err(xref_error(&file, line, format!("duplicate answers for trial {key}")));
            }
            Ok(())
        },
    )?;
    Ok(out)
}

/// Load, cross-reference, normalize and screen the four input tables.
pub fn load_dataset(paths: &DataPaths, policy: &ScreeningPolicy) -> Result<Dataset, DataError> {
    let trials_file = file_label(&paths.trials);
    let mut trials: BTreeMap<TrialKey, TrialRecord> = BTreeMap::new();
    for_each_row(
        open(&paths.trials)?,
        &trials_file,
        &TRIAL_COLUMNS,
        |row: TrialRow, line| {
            if !PLANNED_DURATIONS.contains(&row.planned_duration_s) {
                return Err(row_error(
                    &trials_file,
                    line,
                    format!("planned_duration_s {} not in {{60,180,300}}", row.planned_duration_s),
                ));
            }
            if !ACTIVE_COUNTS.contains(&row.n_active) {
                return Err(row_error(
                    &trials_file,
                    line,
                    format!("n_active {} not in {{1,3,...,15}}", row.n_active),
                ));
            }
            let key = TrialKey::new(row.participant_id, row.trial_id);
            match trials.entry(key) {
                Entry::Occupied(e) => Err(xref_error(&trials_file, line, format!("duplicate trial {}", e.key()))),
                Entry::Vacant(e) => {
                    let key = e.key().clone();
                    e.insert(TrialRecord::new(key, row.planned_duration_s, row.n_active));
                    Ok(())
                }
            }
        },
    )?;

    let q_file = file_label(&paths.questionnaire);
    for_each_row(
        open(&paths.questionnaire)?,
        &q_file,
        &QUESTIONNAIRE_COLUMNS,
        |row: QuestionnaireRow, line| {
            let answer = check_answer(&q_file, line, &row)?;
            let key = TrialKey::new(row.participant_id, row.trial_id);
            let trial = trials
                .get_mut(&key)
                .ok_or_else(|| xref_error(&q_file, line, format!("no trial {key} in trials table")))?;
            if trial.answers.replace(answer).is_some() {
                return Err(xref_error(&q_file, line, format!("duplicate answers for trial {key}")));
            }
            Ok(())
        },
    )?;

    let gaze_file = file_label(&paths.gaze);
    for_each_row(open(&paths.gaze)?, &gaze_file, &GAZE_COLUMNS, |row: GazeRow, line| {
        let sample = GazeSample {
            timestamp: row.timestamp_s,
            pupil_x: row.pupil_x_norm,
            pupil_y: row.pupil_y_norm,
            diam2d_left: row.diam2d_left_px,
            diam2d_right: row.diam2d_right_px,
            diam3d_left: row.diam3d_left_mm,
            diam3d_right: row.diam3d_right_mm,
            confidence: row.confidence,
        };
        if let Some(field) = sample.range_violation() {
            return Err(row_error(&gaze_file, line, format!("{field} out of range")));
        }
        let key = TrialKey::new(row.participant_id, row.trial_id);
        let trial = trials
            .get_mut(&key)
            .ok_or_else(|| xref_error(&gaze_file, line, format!("no trial {key} in trials table")))?;
        match row.phase {
            Phase::Experiment => trial.gaze.push(sample),
            Phase::Baseline => trial.baseline_gaze.push(sample),
        }
        Ok(())
    })?;

    let fix_file = file_label(&paths.fixations);
    for_each_row(
        open(&paths.fixations)?,
        &fix_file,
        &FIXATION_COLUMNS,
        |row: FixationRow, line| {
            let event = FixationEvent {
                id: row.fixation_id,
                start: row.start_s,
                duration: row.duration_s,
                dispersion: row.dispersion_deg,
                x: row.fix_x_norm,
                y: row.fix_y_norm,
            };
            if let Some(field) = event.range_violation() {
                return Err(row_error(&fix_file, line, format!("{field} out of range")));
            }
            let key = TrialKey::new(row.participant_id, row.trial_id);
            let trial = trials
                .get_mut(&key)
                .ok_or_else(|| xref_error(&fix_file, line, format!("no trial {key} in trials table")))?;
            match row.phase {
                Phase::Experiment => trial.fixations.push(event),
                Phase::Baseline => trial.baseline_fixations.push(event),
            }
            Ok(())
        },
    )?;

    let records: Vec<TrialRecord> = trials
        .into_values()
        .map(|mut t| {
            t.normalize_timestamps();
            t
        })
        .collect();
    Ok(Dataset::screened(records, policy))
}

/// The four tables written by [`write_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    Gaze,
    Fixations,
    Trials,
    Questionnaire,
}

impl Table {
    pub const ALL: [Table; 4] = [Table::Gaze, Table::Fixations, Table::Trials, Table::Questionnaire];

    pub fn file_name(self) -> &'static str {
        match self {
            Table::Gaze => "gaze.csv",
            Table::Fixations => "fixations.csv",
            Table::Trials => "trials.csv",
            Table::Questionnaire => "questionnaire.csv",
        }
    }
}

/// Serialize one table of `d`. Trials without answers are omitted from the
/// questionnaire table.
pub fn write_table<W: Write>(d: &Dataset, table: Table, w: W) -> Result<(), DataError> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    let columns: &[&str] = match table {
        Table::Gaze => &GAZE_COLUMNS,
        Table::Fixations => &FIXATION_COLUMNS,
        Table::Trials => &TRIAL_COLUMNS,
        Table::Questionnaire => &QUESTIONNAIRE_COLUMNS,
    };
    wtr.write_record(columns)?;
    for t in &d.trials {
        let pid = &t.key.participant_id;
        let tid = &t.key.trial_id;
        match table {
            Table::Gaze => {
                for (phase, stream) in [(Phase::Baseline, &t.baseline_gaze), (Phase::Experiment, &t.gaze)] {
                    for g in stream {
                        wtr.serialize(GazeRow {
                            participant_id: pid.clone(),
                            trial_id: tid.clone(),
                            phase,
                            timestamp_s: g.timestamp,
                            pupil_x_norm: g.pupil_x,
                            pupil_y_norm: g.pupil_y,
                            diam2d_left_px: g.diam2d_left,
                            diam2d_right_px: g.diam2d_right,
                            diam3d_left_mm: g.diam3d_left,
                            diam3d_right_mm: g.diam3d_right,
                            confidence: g.confidence,
                        })?;
                    }
                }
            }
            Table::Fixations => {
                for (phase, stream) in [
                    (Phase::Baseline, &t.baseline_fixations),
                    (Phase::Experiment, &t.fixations),
                ] {
                    for f in stream {
                        wtr.serialize(FixationRow {
                            participant_id: pid.clone(),
                            trial_id: tid.clone(),
                            phase,
                            fixation_id: f.id,
                            start_s: f.start,
                            duration_s: f.duration,
                            dispersion_deg: f.dispersion,
                            fix_x_norm: f.x,
                            fix_y_norm: f.y,
                        })?;
                    }
                }
            }
            Table::Trials => wtr.serialize(TrialRow {
                participant_id: pid.clone(),
                trial_id: tid.clone(),
                planned_duration_s: t.planned_duration,
                n_active: t.n_active,
            })?,
            Table::Questionnaire => {
                if let Some(a) = t.answers {
                    wtr.serialize(QuestionnaireRow {
                        participant_id: pid.clone(),
                        trial_id: tid.clone(),
                        estimated_duration_s: a.estimated_duration,
                        ppot_likert: a.ppot_likert,
                    })?;
                }
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Write all four tables into `dir` under their conventional names.
pub fn write_dataset(d: &Dataset, dir: &Path) -> Result<DataPaths, DataError> {
    std::fs::create_dir_all(dir)?;
    for table in Table::ALL {
        let f = File::create(dir.join(table.file_name()))?;
        write_table(d, table, std::io::BufWriter::new(f))?;
    }
    Ok(DataPaths::in_dir(dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::trial;
    use crate::data::ExclusionReason;

    fn two_trials() -> Dataset {
        Dataset::screened(
            vec![trial("p1", "t1", 0.9), trial("p2", "t1", 0.95)],
            &ScreeningPolicy::default(),
        )
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = two_trials();
        let paths = write_dataset(&d, dir.path()).unwrap();
        let back = load_dataset(&paths, &ScreeningPolicy::default()).unwrap();
        assert_eq!(back.trials.len(), 2);
        assert!(back.screening_log.is_empty());
        assert_eq!(back, d);
    }

    #[test]
    fn regression_is_screened_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = two_trials();
        d.trials[1].gaze[5].timestamp = 0.05;
        let paths = write_dataset(&d, dir.path()).unwrap();
        let back = load_dataset(&paths, &ScreeningPolicy::default()).unwrap();
        assert_eq!(back.trials.len(), 1);
        assert_eq!(
            back.screening_log,
            vec![(TrialKey::new("p2", "t1"), ExclusionReason::NonMonotoneTimestamps)]
        );
        assert_eq!(back.screening_log[0].1.to_string(), "non-monotone timestamps");
    }

    #[test]
    fn missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_dataset(&DataPaths::in_dir(dir.path()), &ScreeningPolicy::default()).unwrap_err();
        assert!(matches!(err, DataError::MissingFile(_)));
    }

    #[test]
    fn schema_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_dataset(&two_trials(), dir.path()).unwrap();
        std::fs::write(&paths.trials, "participant_id,trial_id,planned_duration_s\np1,t1,60\n").unwrap();
        let err = load_dataset(&paths, &ScreeningPolicy::default()).unwrap_err();
        assert!(matches!(err, DataError::SchemaMismatch { .. }), "{err}");
    }

    #[test]
    fn row_error_carries_line() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_dataset(&two_trials(), dir.path()).unwrap();
        std::fs::write(
            &paths.trials,
            "participant_id,trial_id,planned_duration_s,n_active\np1,t1,60,1\np2,t1,sixty,1\n",
        )
        .unwrap();
        match load_dataset(&paths, &ScreeningPolicy::default()).unwrap_err() {
            DataError::RowParse { line, file, .. } => {
                assert_eq!(line, 3);
                assert_eq!(file, "trials.csv");
            }
            e => panic!("unexpected {e}"),
        }
        std::fs::write(
            &paths.trials,
            "participant_id,trial_id,planned_duration_s,n_active\np1,t1,60,1\np2,t1,60,2\n",
        )
        .unwrap();
        assert!(matches!(
            load_dataset(&paths, &ScreeningPolicy::default()).unwrap_err(),
            DataError::RowParse { line: 3, .. }
        ));
    }

    #[test]
    fn orphan_questionnaire_row() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_dataset(&two_trials(), dir.path()).unwrap();
        let mut q = std::fs::read_to_string(&paths.questionnaire).unwrap();
        q.push_str("p9,t9,30,2\n");
        std::fs::write(&paths.questionnaire, q).unwrap();
        let err = load_dataset(&paths, &ScreeningPolicy::default()).unwrap_err();
        assert!(matches!(err, DataError::CrossReference { line: 4, .. }), "{err}");
    }

    #[test]
    fn out_of_range_gaze_value() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = two_trials();
        d.trials[0].gaze[0].pupil_x = 1.5;
        let paths = write_dataset(&d, dir.path()).unwrap();
        let err = load_dataset(&paths, &ScreeningPolicy::default()).unwrap_err();
        assert!(err.to_string().contains("pupil_x_norm"), "{err}");
    }

    #[test]
    fn columns_may_be_reordered() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_dataset(&two_trials(), dir.path()).unwrap();
        std::fs::write(
            &paths.trials,
            "n_active,trial_id,participant_id,planned_duration_s\n1,t1,p1,60\n1,t1,p2,60\n",
        )
        .unwrap();
        let back = load_dataset(&paths, &ScreeningPolicy::default()).unwrap();
        assert_eq!(back.trials.len(), 2);
        let answers = read_questionnaire(&paths.questionnaire).unwrap();
        assert_eq!(answers.len(), 2);
    }
}
