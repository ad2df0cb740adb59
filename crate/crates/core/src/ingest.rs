//! MovieLens 1M `ratings.dat` loader.
//!
//! Lines look like `UserID::MovieID::Rating::Timestamp`. Ratings 1..=5 are
//! mapped to `(r − 1) / 4`, so the matrix lives in `[0, 1]`.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, ObservationMatrix};

pub const ML1M_USERS: usize = 6040;
pub const ML1M_MOVIES: usize = 3952;
pub const DOWNLOAD_HINT: &str = "download ml-1m.zip from https://files.grouplens.org/datasets/movielens/ml-1m.zip and unzip it, then pass the path to ratings.dat";

pub fn normalize_rating(r: u8) -> Result<f64> {
    if !(1..=5).contains(&r) {
        return Err(Error::validation(format!("rating {r} outside 1..=5")));
    }
    Ok(f64::from(r - 1) / 4.0)
}

/// Inverse of [`normalize_rating`] on the five-point grid.
pub fn denormalize_rating(x: f64) -> Result<u8> {
    let r = 4.0 * x + 1.0;
    let rounded = r.round();
    if (r - rounded).abs() > 1e-9 || !(1.0..=5.0).contains(&rounded) {
        return Err(Error::validation(format!("{x} is not a normalized rating")));
    }
    Ok(rounded as u8)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subsample {
    pub max_users: usize,
    pub max_movies: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MovieLensOptions {
    /// Largest valid user id; also the row count without subsampling.
    pub num_users: usize,
    pub num_movies: usize,
    pub subsample: Option<Subsample>,
}

impl Default for MovieLensOptions {
    fn default() -> Self {
        Self {
            num_users: ML1M_USERS,
            num_movies: ML1M_MOVIES,
            subsample: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovieLensData {
    pub observations: ObservationMatrix,
    /// 1-based ids of the retained users, in row order.
    pub user_ids: Vec<usize>,
    pub movie_ids: Vec<usize>,
    pub lines_read: usize,
    /// Lines that repeated an earlier (user, movie) pair; the later one wins.
    pub duplicates: usize,
}

/// Sorted, 1-based ids: all of them, or a seeded subset of size `keep`.
fn pick_ids(total: usize, keep: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if keep >= total {
        return (1..=total).collect();
    }
    let mut ids: Vec<usize> = sample(rng, total, keep).into_iter().map(|i| i + 1).collect();
    ids.sort_unstable();
    ids
}

fn position_map(total: usize, ids: &[usize]) -> Vec<Option<usize>> {
    let mut map = vec![None; total + 1];
    for (pos, &id) in ids.iter().enumerate() {
        map[id] = Some(pos);
    }
    map
}

pub fn parse_ratings(
    reader: impl BufRead,
    source: &Path,
    opts: &MovieLensOptions,
) -> Result<MovieLensData> {
    if opts.num_users == 0 || opts.num_movies == 0 {
        return Err(Error::validation("user and movie counts must be positive"));
    }
    let (user_ids, movie_ids) = match opts.subsample {
        None => ((1..=opts.num_users).collect(), (1..=opts.num_movies).collect()),
        Some(sub) => {
            if sub.max_users == 0 || sub.max_movies == 0 {
                return Err(Error::validation("subsample sizes must be positive"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(sub.seed);
            let users = pick_ids(opts.num_users, sub.max_users, &mut rng);
            let movies = pick_ids(opts.num_movies, sub.max_movies, &mut rng);
            (users, movies)
        }
    };
    let row_of = position_map(opts.num_users, &user_ids);
    let col_of = position_map(opts.num_movies, &movie_ids);
    let (m, n) = (user_ids.len(), movie_ids.len());
    let mut values = vec![0.0; m * n];
    let mut mask = vec![false; m * n];
    let mut lines_read = 0usize;
    let mut duplicates = 0usize;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let err = |message: String| Error::Parse {
            path: source.to_path_buf(),
            line: lineno,
            message,
        };
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 '::'-separated fields, found {}", fields.len())));
        }
        let int = |s: &str, what: &str| -> Result<usize> {
            s.trim()
                .parse::<usize>()
                .map_err(|_| err(format!("{what} {s:?} is not a non-negative integer")))
        };
        let user = int(fields[0], "user id")?;
        let movie = int(fields[1], "movie id")?;
        let rating = int(fields[2], "rating")?;
        int(fields[3], "timestamp")?;
        if !(1..=opts.num_users).contains(&user) {
            return Err(err(format!("user id {user} outside 1..={}", opts.num_users)));
        }
        if !(1..=opts.num_movies).contains(&movie) {
            return Err(err(format!("movie id {movie} outside 1..={}", opts.num_movies)));
        }
        if !(1..=5).contains(&rating) {
            return Err(err(format!("rating {rating} outside 1..=5")));
        }
        lines_read += 1;
        if let (Some(i), Some(j)) = (row_of[user], col_of[movie]) {
            let cell = i * n + j;
            if mask[cell] {
                duplicates += 1;
            }
            mask[cell] = true;
            values[cell] = normalize_rating(rating as u8)?;
        }
    }

    let observations = ObservationMatrix::new(DenseMatrix::new(m, n, values)?, mask)?;
    Ok(MovieLensData {
        observations,
        user_ids,
        movie_ids,
        lines_read,
        duplicates,
    })
}

pub fn load_movielens(path: impl AsRef<Path>, opts: &MovieLensOptions) -> Result<MovieLensData> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingDataset {
                path: path.to_path_buf(),
                hint: DOWNLOAD_HINT.to_string(),
            }
        } else {
            Error::io(path, e)
        }
    })?;
    parse_ratings(BufReader::new(file), path, opts)
}

/// `$SVTFAIR_MOVIELENS`, else `data/ml-1m/ratings.dat` if it exists.
pub fn default_dataset_path() -> Option<PathBuf> {
    if let Ok(p) = std::env::var("SVTFAIR_MOVIELENS") {
        return Some(PathBuf::from(p));
    }
    let local = PathBuf::from("data/ml-1m/ratings.dat");
    local.exists().then_some(local)
}
