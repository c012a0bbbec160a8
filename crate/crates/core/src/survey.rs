//! Visual Turing Test responses and the statistics computed over them.
//!
//! Every statistic is first reduced to one value per analysis unit
//! (participant by default, painting as the alternate) and then summarized
//! across units. Units are visited in sorted key order, so results do not
//! depend on the order of the response rows.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::stats::{mean, sample_variance, t_test_two_tailed, TTest};

macro_rules! tag_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $tag:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        #[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
        #[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $tag),+ }
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s { $($tag => Ok($name::$variant),)+ other => Err(Error::invalid(format!(
                    concat!("unknown ", stringify!($name), " tag {:?}"), other))) }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result { f.write_str(self.as_str()) }
        }
    };
}

tag_enum!(NativeLang { Zh => "zh", En => "en", Other => "other" });
tag_enum!(
    /// Who made the painting.
    Source { Human => "human", Baseline => "baseline", Sapgan => "sapgan" }
);
tag_enum!(
    /// Q1: "was this painting made by a human or a computer?"
    Judgement { Human => "human", Computer => "computer" }
);
tag_enum!(
    /// The four Q3 rating categories, each on a 1 (disagree) to 4 (agree) scale.
    Category { Aesthetic => "aesthetic", Composition => "composition", Clarity => "clarity", Creative => "creative" }
);

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SurveyResponse {
    pub participant_id: String,
    pub native_lang: NativeLang,
    pub image_id: String,
    pub source: Source,
    pub q1: Judgement,
    pub q2_certainty: u8,
    pub q3_aesthetic: u8,
    pub q3_composition: u8,
    pub q3_clarity: u8,
    pub q3_creative: u8,
    pub timestamp: String,
}

impl SurveyResponse {
    pub fn rating(&self, c: Category) -> u8 {
        match c {
            Category::Aesthetic => self.q3_aesthetic,
            Category::Composition => self.q3_composition,
            Category::Clarity => self.q3_clarity,
            Category::Creative => self.q3_creative,
        }
    }

    pub fn is_correct(&self) -> bool {
        (self.source == Source::Human) == (self.q1 == Judgement::Human)
    }

    pub fn validate(&self) -> Result<()> {
        if self.participant_id.is_empty() || self.image_id.is_empty() {
            return Err(Error::invalid("participant_id and image_id must be non-empty"));
        }
        if !(1..=10).contains(&self.q2_certainty) {
            return Err(Error::invalid(format!("q2_certainty {} outside 1..=10", self.q2_certainty)));
        }
        for &c in Category::ALL {
            let v = self.rating(c);
            if !(1..=4).contains(&v) {
                return Err(Error::invalid(format!("q3_{c} {v} outside 1..=4")));
            }
        }
        Ok(())
    }
}

/// Checks ranges on every row and that no participant rated an image twice.
pub fn validate_responses(responses: &[SurveyResponse]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (i, r) in responses.iter().enumerate() {
        r.validate().map_err(|e| Error::invalid(format!("row {}: {e}", i + 1)))?;
        if !seen.insert((r.participant_id.as_str(), r.image_id.as_str())) {
            return Err(Error::invalid(format!(
                "row {}: participant {:?} already answered image {:?}",
                i + 1,
                r.participant_id,
                r.image_id
            )));
        }
    }
    Ok(())
}

/// What a per-unit statistic is averaged over before summarizing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Unit {
    #[default]
    Participant,
    Painting,
}

impl Unit {
    fn key(self, r: &SurveyResponse) -> &str {
        match self {
            Unit::Participant => &r.participant_id,
            Unit::Painting => &r.image_id,
        }
    }
}

impl FromStr for Unit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "participant" => Ok(Unit::Participant),
            "painting" => Ok(Unit::Painting),
            other => Err(Error::invalid(format!("unknown analysis unit {other:?}"))),
        }
    }
}

/// Mean and sample stddev across units.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Summary {
    pub mean: f64,
    pub stddev: f64,
    pub n: usize,
    /// Fewer than two units: the stddev is reported as 0 but is not defined.
    pub stddev_undefined: bool,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("summary over zero units"));
        }
        Ok(Summary {
            mean: mean(values),
            stddev: libm::sqrt(sample_variance(values)),
            n: values.len(),
            stddev_undefined: values.len() < 2,
        })
    }
}

/// Averages `value(row)` within each unit over the rows `keep` accepts.
fn per_unit(
    responses: &[SurveyResponse],
    unit: Unit,
    keep: impl Fn(&SurveyResponse) -> bool,
    value: impl Fn(&SurveyResponse) -> f64,
) -> BTreeMap<&str, f64> {
    let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in responses.iter().filter(|r| keep(r)) {
        let e = acc.entry(unit.key(r)).or_insert((0.0, 0));
        e.0 += value(r);
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

fn values(m: &BTreeMap<&str, f64>) -> Vec<f64> {
    m.values().copied().collect()
}

/// Per-unit fraction of `source` paintings judged human.
pub fn mistaken_rates(responses: &[SurveyResponse], source: Source, unit: Unit) -> Vec<f64> {
    let m = per_unit(responses, unit, |r| r.source == source, |r| f64::from(u8::from(r.q1 == Judgement::Human)));
    values(&m)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SourceFrequency {
    pub source: Source,
    pub summary: Summary,
}

/// How often each source present in the data was judged human.
pub fn turing_frequency(responses: &[SurveyResponse], unit: Unit) -> Result<Vec<SourceFrequency>> {
    let present: BTreeSet<Source> = responses.iter().map(|r| r.source).collect();
    if present.is_empty() {
        return Err(Error::Empty("survey responses"));
    }
    present
        .into_iter()
        .map(|source| Ok(SourceFrequency { source, summary: Summary::of(&mistaken_rates(responses, source, unit))? }))
        .collect()
}

/// Per-unit mean rating of `source` paintings in category `c`.
pub fn category_means(responses: &[SurveyResponse], source: Source, c: Category, unit: Unit) -> Vec<f64> {
    values(&per_unit(responses, unit, |r| r.source == source, |r| f64::from(r.rating(c))))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PointDistance {
    pub source: Source,
    pub category: Category,
    pub source_mean: f64,
    pub human_mean: f64,
    pub distance: f64,
}

/// `|mean rating(source) − mean rating(human)|` for every machine source and
/// category.
pub fn point_distance(responses: &[SurveyResponse], unit: Unit) -> Result<Vec<PointDistance>> {
    if !responses.iter().any(|r| r.source == Source::Human) {
        return Err(Error::invalid("no human-painting rows to measure distances from"));
    }
    let machines: BTreeSet<Source> = responses.iter().map(|r| r.source).filter(|&s| s != Source::Human).collect();
    let mut out = Vec::new();
    for source in machines {
        for &category in Category::ALL {
            let human_mean = mean(&category_means(responses, Source::Human, category, unit));
            let source_mean = mean(&category_means(responses, source, category, unit));
            out.push(PointDistance {
                source,
                category,
                source_mean,
                human_mean,
                distance: (source_mean - human_mean).abs(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParticipantScore {
    pub participant_id: String,
    pub native_lang: NativeLang,
    pub accuracy: f64,
    pub answered: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoreDistribution {
    pub participants: Vec<ParticipantScore>,
    pub mean: f64,
}

impl ScoreDistribution {
    pub fn accuracies(&self, lang: Option<NativeLang>) -> Vec<f64> {
        self.participants.iter().filter(|p| lang.is_none_or(|l| p.native_lang == l)).map(|p| p.accuracy).collect()
    }

    /// Mean accuracy of one language group, `None` if the group is empty.
    pub fn mean_for(&self, lang: NativeLang) -> Option<f64> {
        let a = self.accuracies(Some(lang));
        (!a.is_empty()).then(|| mean(&a))
    }
}

/// Per-participant Q1 accuracy, ordered by participant id.
pub fn score_distribution(responses: &[SurveyResponse]) -> Result<ScoreDistribution> {
    let mut acc: BTreeMap<&str, (NativeLang, usize, usize)> = BTreeMap::new();
    for r in responses {
        let e = acc.entry(&r.participant_id).or_insert((r.native_lang, 0, 0));
        if e.0 != r.native_lang {
            return Err(Error::invalid(format!("participant {:?} reports two native languages", r.participant_id)));
        }
        e.1 += usize::from(r.is_correct());
        e.2 += 1;
    }
    if acc.is_empty() {
        return Err(Error::Empty("survey responses"));
    }
    let participants: Vec<ParticipantScore> = acc
        .into_iter()
        .map(|(id, (native_lang, correct, answered))| ParticipantScore {
            participant_id: id.into(),
            native_lang,
            accuracy: correct as f64 / answered as f64,
            answered,
        })
        .collect();
    let mean = mean(&participants.iter().map(|p| p.accuracy).collect::<Vec<_>>());
    Ok(ScoreDistribution { participants, mean })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Comparison {
    pub label: String,
    pub test: Option<TTest>,
    /// Why the test was not run, if it was not.
    pub skipped: Option<String>,
}

impl Comparison {
    fn run(label: String, a: &[f64], b: &[f64]) -> Self {
        match t_test_two_tailed(a, b) {
            Ok(t) => Comparison { label, test: Some(t), skipped: None },
            Err(e) => Comparison { label, test: None, skipped: Some(format!("{e}")) },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TuringReport {
    pub unit: Unit,
    pub responses: usize,
    pub frequency: Vec<SourceFrequency>,
    pub point_distance: Vec<PointDistance>,
    pub scores: ScoreDistribution,
    pub comparisons: Vec<Comparison>,
}

/// Validates the responses and computes every statistic plus the group
/// t-tests (sapgan vs baseline on each measure, zh vs en on accuracy).
pub fn turing_report(responses: &[SurveyResponse], unit: Unit) -> Result<TuringReport> {
    validate_responses(responses)?;
    let frequency = turing_frequency(responses, unit)?;
    let point_distance = point_distance(responses, unit)?;
    let scores = score_distribution(responses)?;

    let mut comparisons = alloc::vec![Comparison::run(
        "mistaken-for-human: sapgan vs baseline".into(),
        &mistaken_rates(responses, Source::Sapgan, unit),
        &mistaken_rates(responses, Source::Baseline, unit),
    )];
    for &c in Category::ALL {
        comparisons.push(Comparison::run(
            format!("{c}: sapgan vs baseline"),
            &category_means(responses, Source::Sapgan, c, unit),
            &category_means(responses, Source::Baseline, c, unit),
        ));
    }
    comparisons.push(Comparison::run(
        "accuracy: zh vs en".into(),
        &scores.accuracies(Some(NativeLang::Zh)),
        &scores.accuracies(Some(NativeLang::En)),
    ));
    Ok(TuringReport { unit, responses: responses.len(), frequency, point_distance, scores, comparisons })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn row(p: &str, img: &str, source: Source, q1: Judgement, aesthetic: u8) -> SurveyResponse {
        SurveyResponse {
            participant_id: p.to_string(),
            native_lang: NativeLang::En,
            image_id: img.to_string(),
            source,
            q1,
            q2_certainty: 5,
            q3_aesthetic: aesthetic,
            q3_composition: 2,
            q3_clarity: 3,
            q3_creative: 4,
            timestamp: "0".to_string(),
        }
    }

    #[test]
    fn tags_round_trip_and_reject_unknown() {
        for &s in Source::ALL {
            assert_eq!(s.as_str().parse::<Source>().unwrap(), s);
        }
        assert!("gan".parse::<Source>().is_err());
        assert!("fr".parse::<NativeLang>().is_err());
    }

    #[test]
    fn ranges_and_uniqueness() {
        let mut r = row("p", "i", Source::Human, Judgement::Human, 3);
        assert!(r.validate().is_ok());
        r.q2_certainty = 11;
        assert!(r.validate().is_err());
        r.q2_certainty = 1;
        r.q3_clarity = 0;
        assert!(r.validate().is_err());
        let a = row("p", "i", Source::Human, Judgement::Human, 3);
        assert!(validate_responses(&[a.clone(), a]).is_err());
    }

    #[test]
    fn all_computer_answers() {
        let rows: Vec<_> = (0..4)
            .flat_map(|p| {
                (0..3).map(move |i| row(&format!("p{p}"), &format!("i{i}"), Source::Sapgan, Judgement::Computer, 2))
            })
            .collect();
        let f = turing_frequency(&rows, Unit::Participant).unwrap();
        assert_eq!(f[0].summary.mean, 0.0);
        assert_eq!(f[0].summary.stddev, 0.0);
        assert!(!f[0].summary.stddev_undefined);
    }

    #[test]
    fn single_participant_flags_stddev() {
        let rows = [
            row("p", "a", Source::Baseline, Judgement::Human, 2),
            row("p", "b", Source::Baseline, Judgement::Computer, 2),
        ];
        let f = turing_frequency(&rows, Unit::Participant).unwrap();
        assert_eq!(f[0].summary.mean, 0.5);
        assert_eq!(f[0].summary.stddev, 0.0);
        assert!(f[0].summary.stddev_undefined);
    }

    #[test]
    fn point_distance_needs_human_rows() {
        let rows = [row("p", "a", Source::Sapgan, Judgement::Human, 2)];
        assert!(point_distance(&rows, Unit::Participant).is_err());
        let rows =
            [row("p", "a", Source::Sapgan, Judgement::Human, 2), row("p", "b", Source::Human, Judgement::Human, 2)];
        assert!(point_distance(&rows, Unit::Participant).unwrap().iter().all(|d| d.distance == 0.0));
    }

    #[test]
    fn perfect_score() {
        let rows: Vec<_> = (0..18)
            .map(|i| {
                let (s, j) = match i % 3 {
                    0 => (Source::Human, Judgement::Human),
                    1 => (Source::Baseline, Judgement::Computer),
                    _ => (Source::Sapgan, Judgement::Computer),
                };
                row("p", &format!("i{i}"), s, j, 3)
            })
            .collect();
        assert_eq!(score_distribution(&rows).unwrap().mean, 1.0);
    }

    #[test]
    fn per_painting_unit_groups_by_image() {
        let rows = [
            row("p1", "a", Source::Sapgan, Judgement::Human, 2),
            row("p2", "a", Source::Sapgan, Judgement::Computer, 2),
            row("p1", "b", Source::Sapgan, Judgement::Human, 2),
        ];
        let by_painting = mistaken_rates(&rows, Source::Sapgan, Unit::Painting);
        assert_eq!(by_painting, alloc::vec![0.5, 1.0]);
        let by_participant = mistaken_rates(&rows, Source::Sapgan, Unit::Participant);
        assert_eq!(by_participant, alloc::vec![1.0, 0.0]);
    }
}
