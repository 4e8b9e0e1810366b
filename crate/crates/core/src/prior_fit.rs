//! Prior construction from historical ratings.
//!
//! Pipeline: load item features and per-user ratings from CSV, fit each
//! user's preference vector by least squares on the items they rated, then
//! take the sample mean and covariance across users as the prior for new
//! users. Users with rank-deficient designs (fewer independent ratings
//! than features) are fitted with a small ridge fallback and flagged
//! rather than dropped.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{l1_normalize, psd_repair, FeatureVector, GaussianBelief};

/// Ridge applied only when a user's normal equations are singular at
/// ridge zero.
pub const DEFAULT_RIDGE_FALLBACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Rating {
    pub user_id: String,
    pub item_id: String,
    pub value: f64,
}

/// Loaded, normalized, referentially checked ratings data.
#[derive(Debug, Clone)]
pub struct RatingsDataset {
    /// Item features after L1 normalization, keyed by item id.
    pub items: BTreeMap<String, FeatureVector>,
    pub ratings: Vec<Rating>,
    /// Feature dimension shared by all items.
    pub k: usize,
}

/// One user's fitted preference vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedUser {
    pub theta: Vec<f64>,
    pub observations: usize,
    /// True when the plain least-squares system was singular and the ridge
    /// fallback produced this estimate.
    pub rank_deficient: bool,
}

/// Fitted preference vectors keyed by user id; iteration order is the
/// sorted id order, independent of input order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedUsers {
    pub users: BTreeMap<String, FittedUser>,
}

impl FittedUsers {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Preference vectors in sorted user-id order, ready for episode
    /// simulation against fitted ground truth.
    pub fn thetas(&self) -> Vec<Vec<f64>> {
        self.users.values().map(|u| u.theta.clone()).collect()
    }
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_number(raw: &str, line: u64, column: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| {
        Error::ingestion(format!(
            "line {line}: column {column} is not a number: {raw:?}"
        ))
    })
}

/// Loads an item-feature CSV (`item_id,f1,...,fk`) on its own, returning
/// the normalized items keyed by id plus the feature dimension. Shared by
/// the empirical item source of experiment configs.
pub fn load_items(path: &Path) -> Result<(BTreeMap<String, FeatureVector>, usize)> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::ingestion(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::ingestion(format!("items header: {e}")))?
        .clone();
    if headers.get(0).map(str::trim) != Some("item_id") || headers.len() < 2 {
        return Err(Error::ingestion(
            "items header must be item_id,f1,...,fk".to_string(),
        ));
    }
    let k = headers.len() - 1;
    let mut items = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::ingestion(format!("malformed items row: {e}")))?;
        let line = line_of(&record);
        if record.len() != k + 1 {
            return Err(Error::ingestion(format!(
                "line {line}: expected {} fields, got {}",
                k + 1,
                record.len()
            )));
        }
        let id = record.get(0).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(Error::ingestion(format!("line {line}: empty item_id")));
        }
        let mut values = Vec::with_capacity(k);
        for (i, raw) in record.iter().skip(1).enumerate() {
            values.push(parse_number(raw, line, &format!("f{}", i + 1))?);
        }
        let raw = FeatureVector::new(values)
            .map_err(|e| Error::ingestion(format!("line {line}: {e}")))?;
        let normalized = l1_normalize(&raw).map_err(|_| {
            Error::ingestion(format!("line {line}: item {id} has all-zero features"))
        })?;
        if items.insert(id.clone(), normalized).is_some() {
            return Err(Error::ingestion(format!(
                "line {line}: duplicate item_id {id}"
            )));
        }
    }
    if items.is_empty() {
        return Err(Error::ingestion("items file has no data rows".to_string()));
    }
    Ok((items, k))
}

fn load_rating_rows(path: &Path) -> Result<Vec<Rating>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::ingestion(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::ingestion(format!("ratings header: {e}")))?;
    let expected = ["user_id", "item_id", "rating"];
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::ingestion(format!(
            "ratings header must be user_id,item_id,rating, got {got:?}"
        )));
    }
    let mut ratings = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::ingestion(format!("malformed ratings row: {e}")))?;
        let line = line_of(&record);
        if record.len() != 3 {
            return Err(Error::ingestion(format!(
                "line {line}: expected 3 fields, got {}",
                record.len()
            )));
        }
        let user_id = record.get(0).unwrap_or("").trim().to_string();
        let item_id = record.get(1).unwrap_or("").trim().to_string();
        if user_id.is_empty() || item_id.is_empty() {
            return Err(Error::ingestion(format!(
                "line {line}: empty user_id or item_id"
            )));
        }
        let value = parse_number(record.get(2).unwrap_or(""), line, "rating")?;
        ratings.push(Rating {
            user_id,
            item_id,
            value,
        });
    }
    Ok(ratings)
}

/// Loads and validates the two CSV files. Items are L1-normalized on
/// ingestion; every rating must reference a known item.
pub fn load_ratings(items_path: &Path, ratings_path: &Path) -> Result<RatingsDataset> {
    let (items, k) = load_items(items_path)?;
    let ratings = load_rating_rows(ratings_path)?;
    let unknown: BTreeSet<&str> = ratings
        .iter()
        .filter(|r| !items.contains_key(&r.item_id))
        .map(|r| r.item_id.as_str())
        .collect();
    if !unknown.is_empty() {
        let list: Vec<&str> = unknown.into_iter().collect();
        return Err(Error::ingestion(format!(
            "ratings reference unknown item ids: {}",
            list.join(", ")
        )));
    }
    Ok(RatingsDataset { items, ratings, k })
}

/// Fits each user's preference vector by ridge-regularized least squares
/// on the items they rated. At `ridge = 0` this is plain least squares;
/// singular systems fall back to `DEFAULT_RIDGE_FALLBACK` and are flagged.
pub fn fit_user_preferences(data: &RatingsDataset, ridge: f64) -> Result<FittedUsers> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::invalid("ridge", "must be finite and >= 0"));
    }
    let k = data.k;
    let mut by_user: BTreeMap<&str, Vec<&Rating>> = BTreeMap::new();
    for rating in &data.ratings {
        by_user.entry(&rating.user_id).or_default().push(rating);
    }
    let mut users = BTreeMap::new();
    for (user_id, rows) in by_user {
        // Normal equations: (X'X + ridge I) theta = X'y.
        let mut gram = DMatrix::zeros(k, k);
        let mut moment = DVector::zeros(k);
        for rating in &rows {
            let item = &data.items[&rating.item_id];
            for (i, xi) in item.nonzeros() {
                moment[i] += xi * rating.value;
                for (j, xj) in item.nonzeros() {
                    gram[(i, j)] += xi * xj;
                }
            }
        }
        let regularized = |lambda: f64| {
            let mut a = gram.clone();
            for i in 0..k {
                a[(i, i)] += lambda;
            }
            a
        };
        let (solution, rank_deficient): (DVector<f64>, bool) = match regularized(ridge).cholesky() {
            Some(chol) if ridge > 0.0 => (chol.solve(&moment), false),
            Some(chol) => {
                // Plain least squares succeeded; still flag systems with
                // fewer observations than features, where the Gram matrix
                // is singular in exact arithmetic.
                if rows.len() < k {
                    let fallback =
                        regularized(DEFAULT_RIDGE_FALLBACK)
                            .cholesky()
                            .ok_or_else(|| Error::InvalidCovariance {
                                message: format!(
                                    "user {user_id}: ridge fallback not positive definite"
                                ),
                            })?;
                    (fallback.solve(&moment), true)
                } else {
                    (chol.solve(&moment), false)
                }
            }
            None => {
                let fallback = regularized(ridge + DEFAULT_RIDGE_FALLBACK)
                    .cholesky()
                    .ok_or_else(|| Error::InvalidCovariance {
                        message: format!("user {user_id}: ridge fallback not positive definite"),
                    })?;
                (fallback.solve(&moment), true)
            }
        };
        if solution.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("theta", "fit produced non-finite values"));
        }
        users.insert(
            user_id.to_string(),
            FittedUser {
                theta: solution.as_slice().to_vec(),
                observations: rows.len(),
                rank_deficient,
            },
        );
    }
    Ok(FittedUsers { users })
}

/// Sample mean and unbiased sample covariance of the fitted vectors,
/// PSD-repaired with `repair_eps`, as a prior for new users.
pub fn build_prior(users: &FittedUsers, repair_eps: f64) -> Result<GaussianBelief> {
    let n = users.len();
    if n < 2 {
        return Err(Error::invalid(
            "users",
            "need at least 2 fitted users to form a sample covariance",
        ));
    }
    let k = users
        .users
        .values()
        .next()
        .expect("nonempty checked above")
        .theta
        .len();
    let thetas: Vec<DVector<f64>> = users
        .users
        .values()
        .map(|u| DVector::from_row_slice(&u.theta))
        .collect();
    if thetas.iter().any(|t| t.len() != k) {
        return Err(Error::invalid("users", "inconsistent feature dimensions"));
    }
    let mut mean = DVector::zeros(k);
    for theta in &thetas {
        mean += theta;
    }
    mean /= n as f64;
    let mut covariance = DMatrix::zeros(k, k);
    for theta in &thetas {
        let d = theta - &mean;
        covariance += &d * d.transpose();
    }
    covariance /= (n - 1) as f64;
    GaussianBelief::from_matrix(mean, psd_repair(&covariance, repair_eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::COVARIANCE_REPAIR_EPS;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::io::Write;

    fn write_file(dir: &tempfile::TempDir, name: &str, content: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    fn load(items: &str, ratings: &str) -> Result<RatingsDataset> {
        let dir = tempfile::tempdir().unwrap();
        let items_path = write_file(&dir, "items.csv", items);
        let ratings_path = write_file(&dir, "ratings.csv", ratings);
        load_ratings(&items_path, &ratings_path)
    }

    #[test]
    fn loads_and_normalizes() {
        let data = load(
            "item_id,f1,f2,f3\na,1,1,0\nb,0,0,2\n",
            "user_id,item_id,rating\nu1,a,0.5\nu1,b,0.2\nu2,a,0.9\n",
        )
        .unwrap();
        assert_eq!(data.items.len(), 2);
        assert_eq!(data.ratings.len(), 3);
        assert_eq!(data.k, 3);
        assert_eq!(data.items["a"].values(), &[0.5, 0.5, 0.0]);
        assert_eq!(data.items["b"].values(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn unknown_item_reference_lists_offenders() {
        let err = load(
            "item_id,f1,f2\na,1,0\n",
            "user_id,item_id,rating\nu1,a,0.5\nu1,ghost,0.2\nu2,phantom,0.1\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("ghost") && msg.contains("phantom"), "{msg}");
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let err = load(
            "item_id,f1,f2\na,1,zebra\n",
            "user_id,item_id,rating\nu1,a,0.5\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = load(
            "item_id,f1,f2\na,1,0\n",
            "user_id,item_id,rating\nu1,a,0.5\nu2,a,not_a_number\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn zero_feature_and_duplicate_items_rejected() {
        assert!(load(
            "item_id,f1,f2\na,0,0\n",
            "user_id,item_id,rating\nu1,a,0.5\n"
        )
        .is_err());
        assert!(load(
            "item_id,f1,f2\na,1,0\na,0,1\n",
            "user_id,item_id,rating\nu1,a,0.5\n"
        )
        .is_err());
    }

    #[test]
    fn exact_recovery_on_noiseless_full_rank_data() {
        // theta = (0.8, 0.2): ratings are exactly theta . X for a design
        // spanning both basis directions plus a mixture.
        let data = load(
            "item_id,f1,f2\ne1,1,0\ne2,0,1\nmix,1,1\n",
            "user_id,item_id,rating\nu,e1,0.8\nu,e2,0.2\nu,mix,0.5\n",
        )
        .unwrap();
        let fitted = fit_user_preferences(&data, 0.0).unwrap();
        let user = &fitted.users["u"];
        assert!(!user.rank_deficient);
        assert_eq!(user.observations, 3);
        assert_abs_diff_eq!(user.theta[0], 0.8, epsilon = 1e-8);
        assert_abs_diff_eq!(user.theta[1], 0.2, epsilon = 1e-8);
    }

    #[test]
    fn single_rating_falls_back_to_ridge_and_flags() {
        let data = load(
            "item_id,f1,f2\ne1,1,0\n",
            "user_id,item_id,rating\nu,e1,0.7\n",
        )
        .unwrap();
        let fitted = fit_user_preferences(&data, 0.0).unwrap();
        let user = &fitted.users["u"];
        assert!(user.rank_deficient);
        assert_abs_diff_eq!(
            user.theta[0],
            0.7 / (1.0 + DEFAULT_RIDGE_FALLBACK),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(user.theta[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_ratings_fit_to_zero() {
        let data = load(
            "item_id,f1,f2\ne1,1,0\ne2,0,1\n",
            "user_id,item_id,rating\nu,e1,0\nu,e2,0\n",
        )
        .unwrap();
        let fitted = fit_user_preferences(&data, 0.0).unwrap();
        assert_eq!(fitted.users["u"].theta, vec![0.0, 0.0]);
    }

    #[test]
    fn two_user_prior_arithmetic() {
        let users = FittedUsers {
            users: BTreeMap::from([
                (
                    "a".to_string(),
                    FittedUser {
                        theta: vec![0.0, 0.0],
                        observations: 5,
                        rank_deficient: false,
                    },
                ),
                (
                    "b".to_string(),
                    FittedUser {
                        theta: vec![1.0, 1.0],
                        observations: 5,
                        rank_deficient: false,
                    },
                ),
            ]),
        };
        let eps = COVARIANCE_REPAIR_EPS;
        let prior = build_prior(&users, eps).unwrap();
        assert_abs_diff_eq!(prior.mean()[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(prior.mean()[1], 0.5, epsilon = 1e-12);
        // Sample covariance [[0.5, 0.5], [0.5, 0.5]] has eigenvalues
        // {1, 0}; repair lifts the zero eigenvalue to eps.
        let cov = prior.covariance();
        assert_abs_diff_eq!(cov[(0, 0)], 0.5 + eps / 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cov[(0, 1)], 0.5 - eps / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn identical_users_repair_to_eps_identity() {
        let same = FittedUser {
            theta: vec![0.3, 0.7],
            observations: 4,
            rank_deficient: false,
        };
        let users = FittedUsers {
            users: BTreeMap::from([
                ("a".to_string(), same.clone()),
                ("b".to_string(), same.clone()),
                ("c".to_string(), same),
            ]),
        };
        let prior = build_prior(&users, 1e-8).unwrap();
        let cov = prior.covariance();
        assert_abs_diff_eq!(cov[(0, 0)], 1e-8, epsilon = 1e-12);
        assert_abs_diff_eq!(cov[(1, 1)], 1e-8, epsilon = 1e-12);
        assert_abs_diff_eq!(cov[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn build_prior_requires_two_users() {
        let users = FittedUsers {
            users: BTreeMap::from([(
                "only".to_string(),
                FittedUser {
                    theta: vec![0.1],
                    observations: 1,
                    rank_deficient: true,
                },
            )]),
        };
        assert!(build_prior(&users, 1e-8).is_err());
    }

    #[test]
    fn input_order_does_not_change_the_prior() {
        let forward = load(
            "item_id,f1,f2\ne1,1,0\ne2,0,1\nmix,1,1\n",
            "user_id,item_id,rating\nu1,e1,0.8\nu1,e2,0.2\nu1,mix,0.5\nu2,e1,0.1\nu2,e2,0.9\nu2,mix,0.5\n",
        )
        .unwrap();
        let reversed = load(
            "item_id,f1,f2\nmix,1,1\ne2,0,1\ne1,1,0\n",
            "user_id,item_id,rating\nu2,mix,0.5\nu2,e2,0.9\nu2,e1,0.1\nu1,mix,0.5\nu1,e2,0.2\nu1,e1,0.8\n",
        )
        .unwrap();
        let a = build_prior(&fit_user_preferences(&forward, 0.0).unwrap(), 1e-8).unwrap();
        let b = build_prior(&fit_user_preferences(&reversed, 0.0).unwrap(), 1e-8).unwrap();
        assert_eq!(a.mean(), b.mean());
        assert_eq!(a.covariance(), b.covariance());
    }

    #[test]
    fn fit_then_build_recovers_generating_mean() {
        // 60 users drawn from N(mu*, 0.05 I), each rating a full-rank
        // 3-item design noiselessly; the built prior mean approaches mu*.
        let mu_star = [0.6, 0.2];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let items = String::from("item_id,f1,f2\ne1,1,0\ne2,0,1\nmix,1,1\n");
        let mut ratings = String::from("user_id,item_id,rating\n");
        let n_users = 60;
        for u in 0..n_users {
            let theta = [
                mu_star[0] + 0.05f64.sqrt() * rng.sample::<f64, _>(StandardNormal),
                mu_star[1] + 0.05f64.sqrt() * rng.sample::<f64, _>(StandardNormal),
            ];
            for (item, x) in [("e1", [1.0, 0.0]), ("e2", [0.0, 1.0]), ("mix", [0.5, 0.5])] {
                let r = theta[0] * x[0] + theta[1] * x[1];
                ratings.push_str(&format!("u{u:03},{item},{r}\n"));
            }
        }
        let data = load(&items, &ratings).unwrap();
        let fitted = fit_user_preferences(&data, 0.0).unwrap();
        assert_eq!(fitted.len(), n_users);
        assert!(fitted.users.values().all(|u| !u.rank_deficient));
        let prior = build_prior(&fitted, 1e-10).unwrap();
        // Componentwise within 3 standard errors of the sample mean.
        let se = (0.05 / n_users as f64).sqrt();
        for (i, (&fitted_mean, &target)) in prior.mean().iter().zip(&mu_star).enumerate() {
            assert!(
                (fitted_mean - target).abs() < 3.0 * se,
                "component {i}: {fitted_mean} vs {target}"
            );
        }
        // Covariance diagonal near the generating 0.05.
        for i in 0..2 {
            assert!(
                (prior.covariance()[(i, i)] - 0.05).abs() < 0.05,
                "variance {i} = {}",
                prior.covariance()[(i, i)]
            );
        }
    }
}
