use crate::classes::ColonyClass;
use crate::error::{Error, Result};

pub const ECE_BINS: usize = 10;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::validation("predictions", format!("length {b} differs from labels length {a}")));
    }
    Ok(())
}

/// F1 for each class, indexed by [`ColonyClass::index`].
pub fn per_class_f1(labels: &[ColonyClass], predictions: &[ColonyClass]) -> Result<[f64; 2]> {
    check_lengths(labels.len(), predictions.len())?;
    let mut out = [0.0; 2];
    for class in ColonyClass::ALL {
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for (&l, &p) in labels.iter().zip(predictions) {
            match (l == class, p == class) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        if tp + fn_ == 0 {
            return Err(Error::UndefinedRate(format!("class {} absent from labels", class.as_str())));
        }
        out[class.index()] = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
    }
    Ok(out)
}

/// Unweighted mean of the per-class F1 scores.
pub fn balanced_f1(labels: &[ColonyClass], predictions: &[ColonyClass]) -> Result<f64> {
    let f = per_class_f1(labels, predictions)?;
    Ok((f[0] + f[1]) / 2.0)
}

/// Recall of one class.
pub fn recall_of(class: ColonyClass, labels: &[ColonyClass], predictions: &[ColonyClass]) -> Result<f64> {
    check_lengths(labels.len(), predictions.len())?;
    let support = labels.iter().filter(|&&l| l == class).count();
    if support == 0 {
        return Err(Error::UndefinedRate(format!("class {} absent from labels", class.as_str())));
    }
    let hit = labels.iter().zip(predictions).filter(|&(&l, &p)| l == class && p == class).count();
    Ok(hit as f64 / support as f64)
}

/// Expected calibration error over equal-width confidence bins.
pub fn ece(confidences: &[f64], correct: &[bool], bins: usize) -> Result<f64> {
    check_lengths(confidences.len(), correct.len())?;
    if bins == 0 {
        return Err(Error::validation("bins", "must be positive"));
    }
    if confidences.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::validation("confidences", "must lie in [0, 1]"));
    }
    if confidences.is_empty() {
        return Ok(0.0);
    }
    let mut n = vec![0usize; bins];
    let mut conf = vec![0.0f64; bins];
    let mut hits = vec![0usize; bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let b = ((c * bins as f64) as usize).min(bins - 1);
        n[b] += 1;
        conf[b] += c;
        hits[b] += ok as usize;
    }
    let total = confidences.len() as f64;
    let mut e = 0.0;
    for b in 0..bins {
        if n[b] > 0 {
            let m = n[b] as f64;
            e += (m / total) * (hits[b] as f64 / m - conf[b] / m).abs();
        }
    }
    Ok(e)
}

/// Probability that a random positive outscores a random negative; ties count half.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    check_lengths(positive.len(), scores.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::validation("scores", "must not be NaN"));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedRate("ROC-AUC needs both classes".into()));
    }
    // Mann-Whitney U from average ranks.
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if positive[k] {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}
