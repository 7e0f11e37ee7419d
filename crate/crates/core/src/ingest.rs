//! Dataset parsers and the holdout splitter.
//!
//! Three input layouts are supported:
//!
//! * MovieLens-1M: `ratings.dat` lines `UserID::MovieID::Rating::Timestamp`
//!   and `users.dat` lines `UserID::Gender::Age::Occupation::Zip-code`
//!   (zip ignored). Whole-star ratings out of 5.
//! * BookCrossing: semicolon-separated, double-quoted CSV. Ratings
//!   `"User-ID";"ISBN";"Book-Rating"` on a 0..10 scale (0 encodes implicit
//!   feedback and is dropped, since 0 means "not rated" in the model);
//!   users `"User-ID";"Location";"Age"` with `Location = city, region,
//!   country`. Countries map to merged continents via a lookup table.
//! * Inline: small semicolon-separated fixtures; see [`parse_inline`].
//!
//! Both public datasets ship as Latin-1-compatible byte text; files are
//! decoded byte-for-byte rather than as UTF-8.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{AttributeSchema, ModelError, RatingsMatrix, UserIdx, UserProfiles};
use crate::pipeline::Dataset;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn io_err(path: &Path, source: std::io::Error) -> IngestError {
    IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> IngestError {
    IngestError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Reads a file as Latin-1 text (each byte is one char; never fails on
/// encoding).
fn read_latin1(path: &Path) -> Result<String, IngestError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let mut out = String::with_capacity(bytes.len());
    for b in bytes {
        out.push(b as char);
    }
    Ok(out)
}

fn latin1_lines(path: &Path) -> Result<Vec<String>, IngestError> {
    let text = read_latin1(path)?;
    Ok(text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_owned())
        .collect())
}

// ---------------------------------------------------------------------------
// Age buckets

/// Ordered half-open age ranges `]lo, hi]`; a boundary age belongs to the
/// lower-labeled bucket.
#[derive(Debug, Clone)]
pub struct AgeBuckets {
    ranges: Vec<(String, i64, Option<i64>)>,
}

impl AgeBuckets {
    /// Ranges must be disjoint, ordered, and contiguous; the last range is
    /// unbounded above.
    pub fn new(ranges: Vec<(String, i64, Option<i64>)>) -> Self {
        Self { ranges }
    }

    /// The four ranges used for BookCrossing: ]0,20], ]20,40], ]40,60], ]60,inf[.
    pub fn bookcrossing() -> Self {
        Self::new(vec![
            ("<20".into(), 0, Some(20)),
            ("20-40".into(), 20, Some(40)),
            ("40-60".into(), 40, Some(60)),
            (">60".into(), 60, None),
        ])
    }

    pub fn labels(&self) -> Vec<String> {
        self.ranges.iter().map(|(l, _, _)| l.clone()).collect()
    }
}

/// Label of the range containing `age`, or `None` for a missing/invalid age.
/// Total function: out-of-span ages are simply missing.
pub fn bucket_age(age: Option<i64>, buckets: &AgeBuckets) -> Option<&str> {
    let age = age?;
    buckets
        .ranges
        .iter()
        .find(|(_, lo, hi)| age > *lo && hi.map_or(true, |h| age <= h))
        .map(|(label, _, _)| label.as_str())
}

// ---------------------------------------------------------------------------
// MovieLens-1M

/// ML-1M encodes ages as the lower bound of seven fixed ranges.
const ML1M_AGE_CODES: [(i64, &str); 7] = [
    (1, "<18"),
    (18, "18-24"),
    (25, "25-34"),
    (35, "35-44"),
    (45, "45-49"),
    (50, "50-55"),
    (56, ">55"),
];

/// ML-1M occupation codes 0..=20 in dataset order.
const ML1M_OCCUPATIONS: [&str; 21] = [
    "other",
    "academic/educator",
    "artist",
    "clerical/admin",
    "college/grad student",
    "customer service",
    "doctor/health care",
    "executive/managerial",
    "farmer",
    "homemaker",
    "K-12 student",
    "lawyer",
    "programmer",
    "retired",
    "sales/marketing",
    "scientist",
    "self-employed",
    "technician/engineer",
    "tradesman/craftsman",
    "unemployed",
    "writer",
];

pub fn movielens_schema() -> AttributeSchema {
    AttributeSchema::new(vec![
        ("gender".into(), vec!["m".into(), "f".into()]),
        (
            "age".into(),
            ML1M_AGE_CODES.iter().map(|(_, l)| (*l).to_owned()).collect(),
        ),
        (
            "job".into(),
            ML1M_OCCUPATIONS.iter().map(|l| (*l).to_owned()).collect(),
        ),
    ])
    .expect("static schema")
}

/// Parses the MovieLens-1M double-colon layout. Ratings are normalized by 5.
pub fn parse_movielens(
    ratings_path: impl AsRef<Path>,
    users_path: impl AsRef<Path>,
) -> Result<Dataset, IngestError> {
    let ratings_path = ratings_path.as_ref();
    let users_path = users_path.as_ref();
    let schema = movielens_schema();

    let mut profiles = UserProfiles::new();
    for (ln, line) in latin1_lines(users_path)?.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() < 4 {
            return Err(parse_err(users_path, ln + 1, "expected UserID::Gender::Age::Occupation::Zip-code"));
        }
        let gender = match fields[1].to_ascii_lowercase().as_str() {
            "m" => 0u16,
            "f" => 1u16,
            other => {
                return Err(parse_err(users_path, ln + 1, format!("unknown gender `{other}`")))
            }
        };
        let age_code: i64 = fields[2]
            .parse()
            .map_err(|_| parse_err(users_path, ln + 1, format!("bad age code `{}`", fields[2])))?;
        let age = ML1M_AGE_CODES
            .iter()
            .position(|(code, _)| *code == age_code)
            .ok_or_else(|| parse_err(users_path, ln + 1, format!("unknown age code `{age_code}`")))?
            as u16;
        let job: usize = fields[3].parse().map_err(|_| {
            parse_err(users_path, ln + 1, format!("bad occupation code `{}`", fields[3]))
        })?;
        if job >= ML1M_OCCUPATIONS.len() {
            return Err(parse_err(
                users_path,
                ln + 1,
                format!("unknown occupation code `{job}`"),
            ));
        }
        profiles.insert(fields[0], vec![Some(gender), Some(age), Some(job as u16)]);
    }

    let mut entries = Vec::new();
    for (ln, line) in latin1_lines(ratings_path)?.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() < 3 {
            return Err(parse_err(ratings_path, ln + 1, "expected UserID::MovieID::Rating::Timestamp"));
        }
        let raw: f64 = fields[2].parse().map_err(|_| {
            parse_err(ratings_path, ln + 1, format!("bad rating `{}`", fields[2]))
        })?;
        entries.push((fields[0].to_owned(), fields[1].to_owned(), raw));
    }
    let matrix = RatingsMatrix::from_raw_entries(entries, 5.0)?;
    Ok(Dataset {
        matrix,
        schema,
        profiles,
    })
}

// ---------------------------------------------------------------------------
// BookCrossing

/// Merged continent classes, in reporting order.
pub const MERGED_LOCATION_CLASSES: [&str; 4] = ["EU", "AS+OC", "NA+SA", "AF"];

/// Lowercase country name -> merged continent class index.
#[derive(Debug, Clone, Default)]
pub struct ContinentTable {
    map: HashMap<String, u16>,
}

impl ContinentTable {
    /// Builds from (country, continent code) pairs; codes are the six
    /// two-letter continents AF, AS, NA, SA, OC, EU, merged into
    /// {EU, AS+OC, NA+SA, AF}.
    pub fn from_pairs<I, A, B>(pairs: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut map = HashMap::new();
        for (country, code) in pairs {
            let class = match code.as_ref().trim().to_ascii_uppercase().as_str() {
                "EU" => 0u16,
                "AS" | "OC" => 1,
                "NA" | "SA" => 2,
                "AF" => 3,
                other => return Err(format!("unknown continent code `{other}`")),
            };
            map.insert(country.as_ref().trim().to_ascii_lowercase(), class);
        }
        Ok(Self { map })
    }

    /// Reads a two-column delimiter-separated file (country, continent
    /// code). Semicolon, tab, or last-comma separated; `#` lines are
    /// comments.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let mut pairs = Vec::new();
        for (ln, line) in latin1_lines(path)?.iter().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (country, code) = if let Some((c, k)) = line.split_once(';') {
                (c, k)
            } else if let Some((c, k)) = line.split_once('\t') {
                (c, k)
            } else if let Some((c, k)) = line.rsplit_once(',') {
                (c, k)
            } else {
                return Err(parse_err(path, ln + 1, "expected `country<sep>code`"));
            };
            pairs.push((country.to_owned(), code.to_owned()));
        }
        Self::from_pairs(pairs).map_err(|message| parse_err(path, 0, message))
    }

    /// Merged class index for a country (lowercased, trimmed, exact match).
    pub fn merged_class(&self, country: &str) -> Option<u16> {
        self.map.get(country.trim().to_ascii_lowercase().as_str()).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

pub fn bookcrossing_schema() -> AttributeSchema {
    AttributeSchema::new(vec![
        ("age".into(), AgeBuckets::bookcrossing().labels()),
        (
            "location".into(),
            MERGED_LOCATION_CLASSES.iter().map(|l| (*l).to_owned()).collect(),
        ),
    ])
    .expect("static schema")
}

fn semicolon_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .delimiter(b';')
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes())
}

/// Parses the BookCrossing semicolon-quoted layout. Ratings are normalized
/// by 10; zero-valued (implicit) ratings are dropped. Users whose country is
/// not in the table keep a missing location but stay in the matrix.
pub fn parse_bookcrossing(
    ratings_path: impl AsRef<Path>,
    users_path: impl AsRef<Path>,
    table: &ContinentTable,
) -> Result<Dataset, IngestError> {
    let ratings_path = ratings_path.as_ref();
    let users_path = users_path.as_ref();
    let schema = bookcrossing_schema();
    let buckets = AgeBuckets::bookcrossing();

    let users_text = read_latin1(users_path)?;
    let mut profiles = UserProfiles::new();
    for (ln, record) in semicolon_reader(&users_text).records().enumerate() {
        let record = record.map_err(|e| parse_err(users_path, ln + 2, e.to_string()))?;
        if record.len() < 3 {
            return Err(parse_err(users_path, ln + 2, "expected User-ID;Location;Age"));
        }
        let user = record[0].trim();
        let location = record[1]
            .rsplit(',')
            .next()
            .map(str::trim)
            .unwrap_or_default();
        let location_class = table.merged_class(location);
        let age = record[2].trim().parse::<i64>().ok();
        let age_class = bucket_age(age, &buckets)
            .map(|label| schema.class_index(0, label).expect("bucket label in schema"));
        profiles.insert(user, vec![age_class, location_class]);
    }

    let ratings_text = read_latin1(ratings_path)?;
    let mut entries = Vec::new();
    for (ln, record) in semicolon_reader(&ratings_text).records().enumerate() {
        let record = record.map_err(|e| parse_err(ratings_path, ln + 2, e.to_string()))?;
        if record.len() < 3 {
            return Err(parse_err(ratings_path, ln + 2, "expected User-ID;ISBN;Book-Rating"));
        }
        let raw: f64 = record[2].trim().parse().map_err(|_| {
            parse_err(ratings_path, ln + 2, format!("bad rating `{}`", &record[2]))
        })?;
        if raw == 0.0 {
            // implicit feedback; 0 encodes "not rated" in the model
            continue;
        }
        entries.push((record[0].trim().to_owned(), record[1].trim().to_owned(), raw));
    }
    let matrix = RatingsMatrix::from_raw_entries(entries, 10.0)?;
    Ok(Dataset {
        matrix,
        schema,
        profiles,
    })
}

// ---------------------------------------------------------------------------
// Inline fixtures

/// Parses the inline fixture layout.
///
/// Ratings file: `user;item;rating` rows, with an optional `#max_raw;<v>`
/// directive (default 1.0, i.e. ratings arrive normalized). Users file:
/// `#attribute;<name>;<class>;<class>...` declarations followed by
/// `user;class_1;...;class_k` rows in declaration order; an empty field or
/// `?` marks a missing value. `#`-lines elsewhere are comments.
pub fn parse_inline(
    ratings_path: impl AsRef<Path>,
    users_path: impl AsRef<Path>,
) -> Result<Dataset, IngestError> {
    let ratings_path = ratings_path.as_ref();
    let users_path = users_path.as_ref();

    let mut attributes: Vec<(String, Vec<String>)> = Vec::new();
    let mut assignments: Vec<(usize, String, Vec<String>)> = Vec::new();
    for (ln, line) in latin1_lines(users_path)?.iter().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#attribute;") {
            let mut fields = rest.split(';');
            let name = fields.next().unwrap_or_default().trim().to_owned();
            let classes: Vec<String> =
                fields.map(|c| c.trim().to_owned()).filter(|c| !c.is_empty()).collect();
            if name.is_empty() || classes.is_empty() {
                return Err(parse_err(users_path, ln + 1, "attribute needs a name and classes"));
            }
            attributes.push((name, classes));
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(';');
        let user = fields.next().unwrap_or_default().trim().to_owned();
        let classes: Vec<String> = fields.map(|c| c.trim().to_owned()).collect();
        assignments.push((ln + 1, user, classes));
    }
    if attributes.is_empty() {
        return Err(parse_err(users_path, 0, "no #attribute declarations found"));
    }
    let schema = AttributeSchema::new(attributes)?;
    let mut profiles = UserProfiles::new();
    for (ln, user, classes) in assignments {
        if classes.len() != schema.len() {
            return Err(parse_err(
                users_path,
                ln,
                format!("expected {} class fields, got {}", schema.len(), classes.len()),
            ));
        }
        let labels: Vec<Option<&str>> = classes
            .iter()
            .map(|c| {
                let c = c.as_str();
                (!c.is_empty() && c != "?").then_some(c)
            })
            .collect();
        profiles
            .insert_labels(&schema, &user, &labels)
            .map_err(|e| parse_err(users_path, ln, e.to_string()))?;
    }

    let mut max_raw = 1.0f64;
    let mut entries = Vec::new();
    for (ln, line) in latin1_lines(ratings_path)?.iter().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#max_raw;") {
            max_raw = rest.trim().parse().map_err(|_| {
                parse_err(ratings_path, ln + 1, format!("bad max_raw `{}`", rest.trim()))
            })?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(';').collect();
        if fields.len() != 3 {
            return Err(parse_err(ratings_path, ln + 1, "expected user;item;rating"));
        }
        let raw: f64 = fields[2].trim().parse().map_err(|_| {
            parse_err(ratings_path, ln + 1, format!("bad rating `{}`", fields[2]))
        })?;
        entries.push((fields[0].trim().to_owned(), fields[1].trim().to_owned(), raw));
    }
    let matrix = RatingsMatrix::from_raw_entries(entries, max_raw)?;
    Ok(Dataset {
        matrix,
        schema,
        profiles,
    })
}

/// Renders a dataset back into the inline fixture format (ratings file,
/// users file). Handy for writing goldens and debugging.
pub fn to_inline_strings(dataset: &Dataset) -> (String, String) {
    let mut ratings = String::new();
    let _ = writeln!(ratings, "#max_raw;{}", dataset.matrix.max_raw_rating());
    for (u, i, r) in dataset.matrix.entries() {
        let _ = writeln!(
            ratings,
            "{};{};{}",
            dataset.matrix.user_id(u),
            dataset.matrix.item_id(i),
            dataset.matrix.denormalize(r)
        );
    }
    let mut users = String::new();
    for attr in dataset.schema.attributes() {
        let _ = writeln!(users, "#attribute;{};{}", attr.name, attr.classes.join(";"));
    }
    for u in 0..dataset.matrix.n_users() {
        let id = dataset.matrix.user_id(UserIdx(u as u32));
        let mut row = id.to_owned();
        for j in 0..dataset.schema.len() {
            row.push(';');
            match dataset.profiles.class_of(id, j) {
                Some(c) => row.push_str(dataset.schema.class_label(j, c)),
                None => row.push('?'),
            }
        }
        let _ = writeln!(users, "{row}");
    }
    (ratings, users)
}

// ---------------------------------------------------------------------------
// Holdout split

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitStrategy {
    /// Uniform over all entries.
    #[default]
    GlobalUniform,
    /// Per-user: each user contributes the same fraction of their entries.
    PerUserStratified,
}

/// Partitions the entries into (train, test) uniformly at random. Both
/// halves keep the full user/item universe, so users or items appearing
/// only in the test half simply have no train-side entries (and thus no
/// reputation / ranking there).
pub fn holdout_split(
    matrix: &RatingsMatrix,
    test_fraction: f64,
    seed: u64,
    strategy: SplitStrategy,
) -> Result<(RatingsMatrix, RatingsMatrix), IngestError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(IngestError::InvalidFraction(test_fraction));
    }
    let n = matrix.n_entries();
    let mut in_test = vec![false; n];
    match strategy {
        SplitStrategy::GlobalUniform => {
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            order.shuffle(&mut rng);
            let k = (test_fraction * n as f64).floor() as usize;
            for &ord in order.iter().take(k) {
                in_test[ord] = true;
            }
        }
        SplitStrategy::PerUserStratified => {
            // user u's entries occupy a contiguous ordinal range
            let mut base = 0usize;
            for u in 0..matrix.n_users() {
                let n_u = matrix.ratings_of(UserIdx(u as u32)).len();
                let mut local: Vec<usize> = (0..n_u).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(u as u64);
                local.shuffle(&mut rng);
                let k = (test_fraction * n_u as f64).floor() as usize;
                for &off in local.iter().take(k) {
                    in_test[base + off] = true;
                }
                base += n_u;
            }
        }
    }
    let (train, test) = matrix.partition_entries(|ord| !in_test[ord]);
    Ok((train, test))
}
