use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{Column, Dataset};
use crate::error::{GammError, Result};

use super::{
    ar1_from, normal, random_curves_from, rng_for, RandomCurves, Shape, DESIGN_STREAM,
    EFFECTS_STREAM, NOISE_STREAM_BASE,
};

fn default_k() -> usize {
    8
}

/// A synthetic study: layout, effect sizes, noise and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    /// Innovation sd of the AR(1) noise; zero switches noise off.
    pub noise_sd: f64,
    pub ar_rho: f64,
    /// Basis size of the random curves.
    #[serde(default = "default_k")]
    pub curve_k: usize,
    #[serde(flatten)]
    pub design: Design,
}

/// Study layouts. Covariates named like the variables of the corresponding
/// experiments; shapes are evaluated on covariates mapped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "snake_case")]
pub enum Design {
    /// `n_series` series of a covariate `x ~ U(0, 1)`: `y = signal(x) + e`.
    Single {
        n_series: usize,
        series_length: usize,
        signal: Shape,
    },
    /// Word naming: each subject names `n_trials` verbs drawn at random.
    Naming {
        n_subjects: usize,
        n_trials: usize,
        n_verbs: usize,
        intercept: f64,
        frequency_effect: Shape,
        regularity_effect: f64,
        subject_intercept_sd: f64,
        subject_curve_scale: f64,
        verb_sd: f64,
    },
    /// Pitch contours: every speaker produces every compound once.
    Pitch {
        n_speakers: usize,
        n_compounds: usize,
        n_times: usize,
        intercept: f64,
        contour: Shape,
        sex_effect: f64,
        branching_effect: f64,
        speaker_intercept_sd: f64,
        speaker_curve_scale: f64,
        compound_curve_scale: f64,
        compound_sex_sd: f64,
    },
    /// EEG amplitudes over time for compounds in normal or reversed order.
    Eeg {
        n_subjects: usize,
        n_compounds: usize,
        n_times: usize,
        time_effect: Shape,
        reversed_effect: Shape,
        frequency_interaction: f64,
        compound_sd: f64,
        subject_curve_scale: f64,
    },
    /// Items in two groups (`A` reference, `B`), each observed as one series
    /// per subject over `Time ∈ [0, 1]`.
    Groups {
        n_items: usize,
        n_subjects: usize,
        series_length: usize,
        base: Shape,
        group_difference: Shape,
        item_intercept_sd: f64,
        item_curve_scale: f64,
    },
}

/// Everything needed to rebuild the noiseless response from the dataset's
/// covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: Scenario,
    /// Per-level random intercepts, keyed by effect name then level.
    pub offsets: BTreeMap<String, BTreeMap<String, f64>>,
    /// Random curves on the scenario's B-spline basis, keyed by effect name.
    pub curves: BTreeMap<String, CurveSet>,
    /// Covariate ranges used to map onto `[0, 1]`.
    pub ranges: BTreeMap<String, [f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub levels: Vec<String>,
    pub curves: RandomCurves,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub data: Dataset,
    pub truth: GroundTruth,
    /// Response without noise.
    pub signal: Vec<f64>,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| GammError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| GammError::InvalidArgument(format!(
        "scenario {}: {e}",
        path.display()
    )))
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    let width = n.to_string().len().max(2);
    (1..=n).map(|i| format!("{prefix}{i:0width$}")).collect()
}

fn unit(v: f64, range: [f64; 2]) -> f64 {
    (v - range[0]) / (range[1] - range[0])
}

struct Builder {
    truth: GroundTruth,
    noise_series: usize,
}

impl Builder {
    fn offsets(&mut self, name: &str, levels: &[String], sd: f64, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
        let values: Vec<f64> = levels.iter().map(|_| sd * normal(rng)).collect();
        self.truth.offsets.insert(
            name.to_string(),
            levels.iter().cloned().zip(values.iter().copied()).collect(),
        );
        values
    }

    fn curves(
        &mut self,
        name: &str,
        levels: &[String],
        scale: f64,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<RandomCurves> {
        let c = random_curves_from(rng, levels.len(), self.truth.scenario.curve_k, scale)?;
        self.truth.curves.insert(
            name.to_string(),
            CurveSet {
                levels: levels.to_vec(),
                curves: c.clone(),
            },
        );
        Ok(c)
    }

    /// Noise for the next series, from its own stream.
    fn noise(&mut self, len: usize) -> Result<Vec<f64>> {
        let s = &self.truth.scenario;
        let stream = NOISE_STREAM_BASE + self.noise_series as u64;
        self.noise_series += 1;
        if s.noise_sd == 0.0 {
            return Ok(vec![0.0; len]);
        }
        ar1_from(&mut rng_for(s.seed, stream), len, s.ar_rho, s.noise_sd)
    }
}

fn check(scenario: &Scenario) -> Result<()> {
    if !(0.0..1.0).contains(&scenario.ar_rho) {
        return Err(GammError::InvalidArgument(format!(
            "ar_rho must lie in [0, 1), got {}",
            scenario.ar_rho
        )));
    }
    if !(scenario.noise_sd >= 0.0) {
        return Err(GammError::InvalidArgument("noise_sd must be nonnegative".into()));
    }
    let counts: Vec<usize> = match &scenario.design {
        Design::Single {
            n_series,
            series_length,
            ..
        } => vec![*n_series, *series_length],
        Design::Naming {
            n_subjects,
            n_trials,
            n_verbs,
            ..
        } => vec![*n_subjects, *n_trials, *n_verbs],
        Design::Pitch {
            n_speakers,
            n_compounds,
            n_times,
            ..
        } => vec![*n_speakers, *n_compounds, *n_times],
        Design::Eeg {
            n_subjects,
            n_compounds,
            n_times,
            ..
        } => vec![*n_subjects, *n_compounds, *n_times],
        Design::Groups {
            n_items,
            n_subjects,
            series_length,
            ..
        } => vec![*n_items, *n_subjects, *series_length],
    };
    if counts.iter().any(|&c| c == 0) {
        return Err(GammError::InvalidArgument(
            "scenario counts must be positive".into(),
        ));
    }
    Ok(())
}

/// Draws a dataset for the scenario. Identical scenarios give identical data.
pub fn generate(scenario: &Scenario) -> Result<Generated> {
    check(scenario)?;
    let mut b = Builder {
        truth: GroundTruth {
            scenario: scenario.clone(),
            offsets: BTreeMap::new(),
            curves: BTreeMap::new(),
            ranges: BTreeMap::new(),
        },
        noise_series: 0,
    };
    let mut design_rng = rng_for(scenario.seed, DESIGN_STREAM);
    let mut effects_rng = rng_for(scenario.seed, EFFECTS_STREAM);
    let (columns, signal, noise) = match &scenario.design {
        Design::Single {
            n_series,
            series_length,
            signal: shape,
        } => {
            let n = n_series * series_length;
            let x: Vec<f64> = (0..n).map(|_| design_rng.random::<f64>()).collect();
            b.truth.ranges.insert("x".into(), [0.0, 1.0]);
            let signal: Vec<f64> = x.iter().map(|&v| shape.eval(v)).collect();
            let mut noise = Vec::with_capacity(n);
            for _ in 0..*n_series {
                noise.extend(b.noise(*series_length)?);
            }
            let series = names("T", *n_series);
            let series_col: Vec<&str> = (0..n).map(|i| series[i / series_length].as_str()).collect();
            let columns = vec![
                Column::factor("Series", &series_col),
                Column::numeric("Time", (0..n).map(|i| (i % series_length) as f64).collect()),
                Column::numeric("x", x),
                Column::boolean("NewTimeSeries", (0..n).map(|i| i % series_length == 0).collect()),
            ];
            (columns, signal, noise)
        }
        Design::Naming {
            n_subjects,
            n_trials,
            n_verbs,
            intercept,
            frequency_effect,
            regularity_effect,
            subject_intercept_sd,
            subject_curve_scale,
            verb_sd,
        } => {
            let subjects = names("S", *n_subjects);
            let verbs = names("V", *n_verbs);
            let frequency: Vec<f64> = (0..*n_verbs).map(|_| 10.0 * design_rng.random::<f64>()).collect();
            let regular: Vec<bool> = (0..*n_verbs).map(|_| design_rng.random::<f64>() < 0.5).collect();
            let freq_range = [0.0, 10.0];
            let trial_range = [1.0, *n_trials as f64];
            b.truth.ranges.insert("Frequency".into(), freq_range);
            b.truth.ranges.insert("Trial".into(), trial_range);
            let subj_int = b.offsets("Subject", &subjects, *subject_intercept_sd, &mut effects_rng);
            let subj_curves = b.curves("Subject", &subjects, *subject_curve_scale, &mut effects_rng)?;
            let verb_int = b.offsets("Verb", &verbs, *verb_sd, &mut effects_rng);

            let n = n_subjects * n_trials;
            let mut cols: (Vec<&str>, Vec<f64>, Vec<&str>, Vec<f64>, Vec<&str>, Vec<bool>) =
                Default::default();
            let mut signal = Vec::with_capacity(n);
            let mut noise = Vec::with_capacity(n);
            for (s, subject) in subjects.iter().enumerate() {
                for t in 1..=*n_trials {
                    let v = design_rng.random_range(0..*n_verbs);
                    let trial = t as f64;
                    cols.0.push(subject);
                    cols.1.push(trial);
                    cols.2.push(&verbs[v]);
                    cols.3.push(frequency[v]);
                    cols.4.push(if regular[v] { "regular" } else { "irregular" });
                    cols.5.push(t == 1);
                    signal.push(
                        intercept
                            + frequency_effect.eval(unit(frequency[v], freq_range))
                            + if regular[v] { *regularity_effect } else { 0.0 }
                            + subj_int[s]
                            + subj_curves.eval(s, unit(trial, trial_range))
                            + verb_int[v],
                    );
                }
                noise.extend(b.noise(*n_trials)?);
            }
            let columns = vec![
                Column::factor("Subject", &cols.0),
                Column::numeric("Trial", cols.1),
                Column::factor("Verb", &cols.2),
                Column::numeric("Frequency", cols.3),
                Column::factor_with_levels(
                    "Regularity",
                    &cols.4,
                    vec!["irregular".into(), "regular".into()],
                    false,
                )?,
                Column::boolean("NewTimeSeries", cols.5),
            ];
            (columns, signal, noise)
        }
        Design::Pitch {
            n_speakers,
            n_compounds,
            n_times,
            intercept,
            contour,
            sex_effect,
            branching_effect,
            speaker_intercept_sd,
            speaker_curve_scale,
            compound_curve_scale,
            compound_sex_sd,
        } => {
            let speakers = names("SP", *n_speakers);
            let compounds = names("C", *n_compounds);
            let branching = ["LN1", "LN2", "RN1", "RN2"];
            let log_freq: Vec<f64> = (0..*n_compounds).map(|_| 10.0 * design_rng.random::<f64>()).collect();
            let male = |s: usize| s >= n_speakers / 2;
            b.truth.ranges.insert("NormalizedTime".into(), [0.0, 1.0]);
            let spk_int = b.offsets("Speaker", &speakers, *speaker_intercept_sd, &mut effects_rng);
            let spk_curves = b.curves("Speaker", &speakers, *speaker_curve_scale, &mut effects_rng)?;
            let cmp_curves = b.curves("Compound", &compounds, *compound_curve_scale, &mut effects_rng)?;
            let pairs: Vec<String> = compounds
                .iter()
                .flat_map(|c| ["f", "m"].map(|s| format!("{c}:{s}")))
                .collect();
            let cs = b.offsets("Compound:Sex", &pairs, *compound_sex_sd, &mut effects_rng);

            let mut cols: (Vec<&str>, Vec<&str>, Vec<&str>, Vec<&str>, Vec<f64>, Vec<f64>, Vec<bool>) =
                Default::default();
            let mut signal = Vec::new();
            let mut noise = Vec::new();
            for s in 0..*n_speakers {
                for c in 0..*n_compounds {
                    let br = c % 4;
                    for t in 0..*n_times {
                        let u = if *n_times > 1 { t as f64 / (*n_times - 1) as f64 } else { 0.0 };
                        cols.0.push(&speakers[s]);
                        cols.1.push(if male(s) { "m" } else { "f" });
                        cols.2.push(&compounds[c]);
                        cols.3.push(branching[br]);
                        cols.4.push(u);
                        cols.5.push(log_freq[c]);
                        cols.6.push(t == 0);
                        signal.push(
                            intercept
                                + contour.eval(u)
                                + if male(s) { *sex_effect } else { 0.0 }
                                + if br > 0 { *branching_effect } else { 0.0 }
                                + spk_int[s]
                                + spk_curves.eval(s, u)
                                + cmp_curves.eval(c, u)
                                + cs[2 * c + usize::from(male(s))],
                        );
                    }
                    noise.extend(b.noise(*n_times)?);
                }
            }
            let columns = vec![
                Column::factor("Speaker", &cols.0),
                Column::factor_with_levels("Sex", &cols.1, vec!["f".into(), "m".into()], false)?,
                Column::factor("Compound", &cols.2),
                Column::factor_with_levels(
                    "BranchingOrd",
                    &cols.3,
                    branching.iter().map(|s| s.to_string()).collect(),
                    true,
                )?,
                Column::numeric("NormalizedTime", cols.4),
                Column::numeric("LogFrequency", cols.5),
                Column::boolean("NewTimeSeries", cols.6),
            ];
            (columns, signal, noise)
        }
        Design::Eeg {
            n_subjects,
            n_compounds,
            n_times,
            time_effect,
            reversed_effect,
            frequency_interaction,
            compound_sd,
            subject_curve_scale,
        } => {
            let subjects = names("S", *n_subjects);
            let compounds = names("C", *n_compounds);
            let f1: Vec<f64> = (0..*n_compounds).map(|_| 8.0 * design_rng.random::<f64>()).collect();
            let f2: Vec<f64> = (0..*n_compounds).map(|_| 8.0 * design_rng.random::<f64>()).collect();
            let fc: Vec<f64> = (0..*n_compounds).map(|_| 6.0 * design_rng.random::<f64>()).collect();
            b.truth.ranges.insert("Time".into(), [0.0, 1.0]);
            b.truth.ranges.insert("LogFreqC1".into(), [0.0, 8.0]);
            b.truth.ranges.insert("LogFreqC2".into(), [0.0, 8.0]);
            let cmp_int = b.offsets("Compound", &compounds, *compound_sd, &mut effects_rng);
            let subj_curves = b.curves("Subject", &subjects, *subject_curve_scale, &mut effects_rng)?;
            let orders = ["normal", "reversed"];

            let mut cols: (
                Vec<&str>,
                Vec<&str>,
                Vec<f64>,
                Vec<f64>,
                Vec<&str>,
                Vec<f64>,
                Vec<f64>,
                Vec<f64>,
                Vec<bool>,
            ) = Default::default();
            let mut signal = Vec::new();
            let mut noise = Vec::new();
            for (s, subject) in subjects.iter().enumerate() {
                for c in 0..*n_compounds {
                    let rev = c % 2 == 1;
                    let trial = (c + 1) as f64;
                    for t in 0..*n_times {
                        let u = if *n_times > 1 { t as f64 / (*n_times - 1) as f64 } else { 0.0 };
                        cols.0.push(subject);
                        cols.1.push(&compounds[c]);
                        cols.2.push(trial);
                        cols.3.push(u);
                        cols.4.push(orders[usize::from(rev)]);
                        cols.5.push(f1[c]);
                        cols.6.push(f2[c]);
                        cols.7.push(fc[c]);
                        cols.8.push(t == 0);
                        let surface = frequency_interaction
                            * (unit(f1[c], [0.0, 8.0]) - 0.5)
                            * (unit(f2[c], [0.0, 8.0]) - 0.5);
                        signal.push(
                            time_effect.eval(u)
                                + if rev { reversed_effect.eval(u) } else { 0.0 }
                                + surface
                                + cmp_int[c]
                                + subj_curves.eval(s, u),
                        );
                    }
                    noise.extend(b.noise(*n_times)?);
                }
            }
            let columns = vec![
                Column::factor("Subject", &cols.0),
                Column::factor("Compound", &cols.1),
                Column::numeric("Trial", cols.2),
                Column::numeric("Time", cols.3),
                Column::factor_with_levels(
                    "ConstituentOrder",
                    &cols.4,
                    orders.iter().map(|s| s.to_string()).collect(),
                    true,
                )?,
                Column::numeric("LogFreqC1", cols.5),
                Column::numeric("LogFreqC2", cols.6),
                Column::numeric("LogCompFreq", cols.7),
                Column::boolean("Start", cols.8),
            ];
            (columns, signal, noise)
        }
        Design::Groups {
            n_items,
            n_subjects,
            series_length,
            base,
            group_difference,
            item_intercept_sd,
            item_curve_scale,
        } => {
            let items = names("I", *n_items);
            let subjects = names("S", *n_subjects);
            b.truth.ranges.insert("Time".into(), [0.0, 1.0]);
            let item_int = b.offsets("Item", &items, *item_intercept_sd, &mut effects_rng);
            let item_curves = b.curves("Item", &items, *item_curve_scale, &mut effects_rng)?;
            let groups = ["A", "B"];

            let mut cols: (Vec<&str>, Vec<&str>, Vec<&str>, Vec<f64>, Vec<bool>) = Default::default();
            let mut signal = Vec::new();
            let mut noise = Vec::new();
            for subject in &subjects {
                for (i, item) in items.iter().enumerate() {
                    let g = i % 2;
                    for t in 0..*series_length {
                        let u = if *series_length > 1 {
                            t as f64 / (*series_length - 1) as f64
                        } else {
                            0.0
                        };
                        cols.0.push(subject);
                        cols.1.push(item);
                        cols.2.push(groups[g]);
                        cols.3.push(u);
                        cols.4.push(t == 0);
                        signal.push(
                            base.eval(u)
                                + if g == 1 { group_difference.eval(u) } else { 0.0 }
                                + item_int[i]
                                + item_curves.eval(i, u),
                        );
                    }
                    noise.extend(b.noise(*series_length)?);
                }
            }
            let columns = vec![
                Column::factor("Subject", &cols.0),
                Column::factor("Item", &cols.1),
                Column::factor_with_levels(
                    "Group",
                    &cols.2,
                    groups.iter().map(|s| s.to_string()).collect(),
                    true,
                )?,
                Column::numeric("Time", cols.3),
                Column::boolean("Start", cols.4),
            ];
            (columns, signal, noise)
        }
    };
    let response: Vec<f64> = signal.iter().zip(&noise).map(|(s, e)| s + e).collect();
    let response_name = match &scenario.design {
        Design::Single { .. } | Design::Groups { .. } => "y",
        Design::Naming { .. } => "RT",
        Design::Pitch { .. } => "PitchSemiTone",
        Design::Eeg { .. } => "Amplitude",
    };
    let mut columns = columns;
    columns.push(Column::numeric(response_name, response));
    Ok(Generated {
        data: Dataset::new(columns)?,
        truth: b.truth,
        signal,
    })
}
