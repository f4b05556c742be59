mod common;

use common::{oracle_predictions, random_case, sql_predictions, sqlite};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn sql_pipeline_matches_oracle_on_random_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..40 {
        let case = random_case(&mut rng, 300);
        let mut conn = sqlite();
        let got = sql_predictions(&mut conn, &case);
        let want = oracle_predictions(&case);
        for (r, (g, w)) in got.iter().zip(&want).enumerate() {
            assert_eq!(g, w, "case {i} eval row {r}: {:?} {:?} {case:?}", case.eval[r], case.binning);
        }
    }
}

#[test]
fn model_counts_match_oracle_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..15 {
        let case = random_case(&mut rng, 200);
        let mut conn = sqlite();
        sql_predictions(&mut conn, &case);
        let oracle = histql_core::oracle::OracleModel::fit(&case.train, case.binning, case.bins).unwrap();
        let n = case.kinds().len();
        let cols: Vec<String> = (0..n).map(common::feature_name).map(|f| format!("\"{f}\"")).collect();
        let sql = format!(
            "SELECT {c}, \"y\", \"cnt\" FROM \"m_M\" ORDER BY {c}, \"y\"",
            c = cols.join(", ")
        );
        use histql_core::DbConnection;
        let rows = conn.query(&sql).unwrap().rows;
        let mut stored: Vec<((Vec<histql_core::Value>, histql_core::Value), u64)> = rows
            .into_iter()
            .map(|mut r| {
                let cnt = r.pop().unwrap().as_i64().unwrap() as u64;
                let y = r.pop().unwrap();
                ((r, y), cnt)
            })
            .collect();
        stored.sort_by(|a, b| a.0.cmp(&b.0));
        let expected: Vec<_> = oracle.counts().iter().map(|(k, &c)| (k.clone(), c)).collect();
        assert_eq!(stored, expected);
        let total: u64 = stored.iter().map(|(_, c)| c).sum();
        assert_eq!(total, oracle.trained_rows());
    }
}
