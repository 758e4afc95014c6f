use std::collections::{BTreeMap, BTreeSet};

use crate::bench::{Category, QuestionInstance};
use crate::causal::Label;
use crate::num::{ratio_to_scalar, Ratio, Scalar};

use super::{Offender, SkewError, SkewKind, SkewReport};

/// Count-based audit.
///
/// For every event phrase, occurrences are tallied per (label, category).
/// A phrase's score is its largest category share within any single label:
/// `max_label max_category count(label, category) / count(label)`. A phrase
/// spread evenly over the four categories scores 0.25; one confined to a
/// single category scores 1.0. Phrases scoring strictly above `threshold`
/// are reported, highest score first, then most frequent, then by phrase.
pub fn count_skew<'a, S: Scalar>(
    questions: impl IntoIterator<Item = &'a QuestionInstance>,
    threshold: S,
) -> Result<SkewReport<S>, SkewError> {
    if !(threshold > S::zero() && threshold <= S::one()) {
        return Err(SkewError::Threshold(threshold.to_f64_lossy()));
    }

    let mut tally: BTreeMap<&str, BTreeMap<(Label, Category), usize>> = BTreeMap::new();
    for q in questions {
        for (_, phrase) in q.triple.phrases() {
            *tally
                .entry(phrase)
                .or_default()
                .entry((q.label, q.category))
                .or_default() += 1;
        }
    }

    let mut offenders = Vec::new();
    for (phrase, cells) in tally {
        let share = max_label_share(&cells);
        let score: S = ratio_to_scalar(share);
        if score <= threshold {
            continue;
        }
        let categories: BTreeSet<Category> = cells.keys().map(|(_, c)| *c).collect();
        offenders.push((
            share,
            Offender {
                item: phrase.to_string(),
                score,
                occurrences: cells.values().sum(),
                affected_categories: categories.into_iter().collect(),
                distribution: cells
                    .iter()
                    .map(|((l, c), n)| (format!("{l}/{c}"), *n))
                    .collect(),
            },
        ));
    }
    // Exact ratios order the report; the scalar copy is for display.
    offenders.sort_by(|(ra, a), (rb, b)| {
        rb.cmp(ra)
            .then(b.occurrences.cmp(&a.occurrences))
            .then(a.item.cmp(&b.item))
    });

    Ok(SkewReport {
        kind: SkewKind::CountBased,
        offenders: offenders.into_iter().map(|(_, o)| o).collect(),
        threshold_used: Some(threshold),
        k: None,
        generated_at: None,
    })
}

fn max_label_share(cells: &BTreeMap<(Label, Category), usize>) -> Ratio {
    let mut best = Ratio::from_integer(0);
    for label in [Label::Yes, Label::No] {
        let per_label: Vec<usize> = cells
            .iter()
            .filter(|((l, _), _)| *l == label)
            .map(|(_, n)| *n)
            .collect();
        let total: usize = per_label.iter().sum();
        if total == 0 {
            continue;
        }
        let top = *per_label.iter().max().unwrap();
        best = best.max(Ratio::new(top as u64, total as u64));
    }
    best
}
