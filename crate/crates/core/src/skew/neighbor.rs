use std::collections::{BTreeMap, BTreeSet};

use crate::bench::{Category, QuestionInstance};
use crate::num::Scalar;

use super::embed::EmbeddingTable;
use super::{Offender, SkewError, SkewKind, SkewReport};

/// Default neighbour-list length.
pub const DEFAULT_K: usize = 5;

/// Cosine similarity; a zero vector is dissimilar to everything.
pub fn cosine<S: Scalar>(a: &[S], b: &[S]) -> S {
    let (mut dot, mut na, mut nb) = (S::zero(), S::zero(), S::zero());
    for (x, y) in a.iter().zip(b) {
        dot = dot + *x * *y;
        na = na + *x * *x;
        nb = nb + *y * *y;
    }
    if na == S::zero() || nb == S::zero() {
        return S::zero();
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// The `min(k, n - 1)` most similar other questions for each id, most
/// similar first; ties go to the smaller id.
pub fn neighbor_lists<S: Scalar>(
    ids: &[&str],
    table: &EmbeddingTable<S>,
    k: usize,
) -> Result<BTreeMap<String, Vec<(String, S)>>, SkewError> {
    if k == 0 {
        return Err(SkewError::ZeroK);
    }
    let mut sorted: Vec<&str> = ids.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let vectors = sorted
        .iter()
        .map(|id| table.get(id).ok_or_else(|| SkewError::Coverage(id.to_string())))
        .collect::<Result<Vec<_>, _>>()?;

    let keep = k.min(sorted.len().saturating_sub(1));
    let mut lists = BTreeMap::new();
    for (i, id) in sorted.iter().enumerate() {
        let mut sims: Vec<(usize, S)> = (0..sorted.len())
            .filter(|&j| j != i)
            .map(|j| (j, cosine(vectors[i], vectors[j])))
            .collect();
        // Indices follow id order, so the index breaks ties by id.
        sims.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then(a.0.cmp(&b.0)));
        sims.truncate(keep);
        lists.insert(
            id.to_string(),
            sims.into_iter().map(|(j, s)| (sorted[j].to_string(), s)).collect(),
        );
    }
    Ok(lists)
}

/// Number of neighbour lists each question appears in.
pub fn neighbor_skew_ids<S: Scalar>(
    ids: &[&str],
    table: &EmbeddingTable<S>,
    k: usize,
) -> Result<BTreeMap<String, usize>, SkewError> {
    let lists = neighbor_lists(ids, table, k)?;
    let mut hits: BTreeMap<String, usize> = lists.keys().map(|id| (id.clone(), 0)).collect();
    for list in lists.values() {
        for (id, _) in list {
            *hits.get_mut(id).expect("neighbour is a listed id") += 1;
        }
    }
    Ok(hits)
}

/// Similarity-based audit: questions that appear in many neighbour lists
/// act as hubs and may carry shortcut features. Every question with a
/// non-zero count is reported, most frequent first.
pub fn neighbor_skew<'a, S: Scalar>(
    questions: impl IntoIterator<Item = &'a QuestionInstance>,
    table: &EmbeddingTable<S>,
    k: usize,
) -> Result<SkewReport<S>, SkewError> {
    let questions: Vec<&QuestionInstance> = questions.into_iter().collect();
    let category: BTreeMap<&str, Category> =
        questions.iter().map(|q| (q.id.as_str(), q.category)).collect();
    let ids: Vec<&str> = category.keys().copied().collect();
    let lists = neighbor_lists(&ids, table, k)?;

    let mut hits: BTreeMap<&str, (usize, BTreeSet<Category>)> = BTreeMap::new();
    for (owner, list) in &lists {
        for (id, _) in list {
            let e = hits.entry(id.as_str()).or_default();
            e.0 += 1;
            e.1.insert(category[owner.as_str()]);
        }
    }
    let mut offenders: Vec<Offender<S>> = hits
        .into_iter()
        .map(|(id, (n, owners))| Offender {
            item: id.to_string(),
            score: S::from_count(n),
            occurrences: n,
            affected_categories: owners.into_iter().collect(),
            distribution: Vec::new(),
        })
        .collect();
    offenders.sort_by(|a, b| b.occurrences.cmp(&a.occurrences).then(a.item.cmp(&b.item)));

    Ok(SkewReport {
        kind: SkewKind::SimilarityBased,
        offenders,
        threshold_used: None,
        k: Some(k),
        generated_at: None,
    })
}
