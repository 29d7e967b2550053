//! Rating-file readers and the preprocessed dataset cache.
//!
//! Cache layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "MDALSDC1"
//! version  u32      1
//! users    u64      number of users U
//! items    u64      number of items I
//! tokens   U then I entries of { u32 byte length, utf8 bytes }
//! rows     u64      interaction count
//!          per row: u32 user, u32 item, u8 label (0/1),
//!                   u8 split (0 train, 1 validation, 2 test)
//! ```
//!
//! Writing is fully deterministic: identical datasets produce identical
//! bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::{Interaction, RatingDataset, RawRating, Split};
use crate::{Error, Real, Result};

const CACHE_MAGIC: &[u8; 8] = b"MDALSDC1";
const CACHE_VERSION: u32 = 1;

/// Supported rating-log formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatingsFormat {
    /// `userId,movieId,rating,timestamp` CSV with an optional header.
    MovieLens,
    /// `user,item,rating,timestamp` CSV with arbitrary tokens and an
    /// optional header.
    GenericCsv,
    /// Per-movie text files: `MovieID:` header lines followed by
    /// `CustomerID,Rating,Date` rows.
    NetflixTxt,
}

impl std::str::FromStr for RatingsFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens" => Ok(RatingsFormat::MovieLens),
            "generic" => Ok(RatingsFormat::GenericCsv),
            "netflix" => Ok(RatingsFormat::NetflixTxt),
            other => Err(Error::InvalidInput(format!("unknown format '{other}'"))),
        }
    }
}

/// Parsed records plus the number of malformed lines that were skipped.
#[derive(Debug)]
pub struct LoadOutcome {
    pub ratings: Vec<RawRating>,
    pub skipped: usize,
}

/// Reads all parseable records. A leading header line is detected and
/// skipped without counting; more than 1% malformed lines is treated as a
/// wrong-format error.
pub fn load_ratings(reader: impl BufRead, format: RatingsFormat) -> Result<LoadOutcome> {
    let mut ratings = Vec::new();
    let mut skipped = 0usize;
    let mut data_lines = 0usize;
    let mut current_movie: Option<String> = None;

    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match format {
            RatingsFormat::MovieLens | RatingsFormat::GenericCsv => {
                match parse_csv_line(trimmed) {
                    Some(r) => {
                        ratings.push(r);
                        data_lines += 1;
                    }
                    None if line_no == 0 => {} // header
                    None => {
                        skipped += 1;
                        data_lines += 1;
                    }
                }
            }
            RatingsFormat::NetflixTxt => {
                if let Some(movie) = trimmed.strip_suffix(':') {
                    current_movie = Some(movie.trim().to_string());
                    continue;
                }
                data_lines += 1;
                match (&current_movie, parse_netflix_line(trimmed)) {
                    (Some(movie), Some((user, rating, ts))) => ratings.push(RawRating {
                        user,
                        item: movie.clone(),
                        rating,
                        timestamp: ts,
                    }),
                    _ => skipped += 1,
                }
            }
        }
    }

    if data_lines > 0 && skipped as f64 > 0.01 * data_lines as f64 {
        return Err(Error::Data(format!(
            "{skipped} of {data_lines} lines malformed; wrong format?"
        )));
    }
    Ok(LoadOutcome { ratings, skipped })
}

fn parse_csv_line(line: &str) -> Option<RawRating> {
    let mut fields = line.split(',');
    let user = fields.next()?.trim();
    let item = fields.next()?.trim();
    let rating: Real = fields.next()?.trim().parse().ok()?;
    let timestamp: i64 = fields.next()?.trim().parse().ok()?;
    if fields.next().is_some() || user.is_empty() || item.is_empty() || !rating.is_finite() {
        return None;
    }
    Some(RawRating {
        user: user.to_string(),
        item: item.to_string(),
        rating,
        timestamp,
    })
}

fn parse_netflix_line(line: &str) -> Option<(String, Real, i64)> {
    let mut fields = line.split(',');
    let user = fields.next()?.trim();
    let rating: Real = fields.next()?.trim().parse().ok()?;
    let date = fields.next()?.trim();
    if fields.next().is_some() || user.is_empty() || !rating.is_finite() {
        return None;
    }
    let ts = NaiveDate::parse_from_str(date, "%Y-%m-%d")
        .ok()?
        .and_hms_opt(0, 0, 0)?
        .and_utc()
        .timestamp();
    Some((user.to_string(), rating, ts))
}

pub fn load_ratings_path(path: &Path, format: RatingsFormat) -> Result<LoadOutcome> {
    let file = File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    load_ratings(BufReader::new(file), format)
}

pub fn write_dataset_cache(ds: &RatingDataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    w.write_all(&(ds.num_users() as u64).to_le_bytes())?;
    w.write_all(&(ds.num_items() as u64).to_le_bytes())?;
    for token in ds.user_tokens().iter().chain(ds.item_tokens()) {
        let bytes = token.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
    }
    w.write_all(&(ds.interactions().len() as u64).to_le_bytes())?;
    for it in ds.interactions() {
        w.write_all(&it.user.to_le_bytes())?;
        w.write_all(&it.item.to_le_bytes())?;
        w.write_all(&[it.label as u8, it.split.tag()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_cache(path: &Path) -> Result<RatingDataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("dataset cache too short".into()))?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Format("not a dataset cache (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CACHE_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset cache version {version}"
        )));
    }
    let users = read_u64(&mut r)? as usize;
    let items = read_u64(&mut r)? as usize;
    let read_tokens = |n: usize, r: &mut BufReader<File>| -> Result<Vec<String>> {
        (0..n)
            .map(|_| {
                let len = read_u32(r)? as usize;
                let mut buf = vec![0u8; len];
                r.read_exact(&mut buf)?;
                String::from_utf8(buf).map_err(|_| Error::Format("token is not utf-8".into()))
            })
            .collect()
    };
    let user_tokens = read_tokens(users, &mut r)?;
    let item_tokens = read_tokens(items, &mut r)?;
    let rows = read_u64(&mut r)? as usize;
    let mut interactions = Vec::with_capacity(rows);
    for _ in 0..rows {
        let user = read_u32(&mut r)?;
        let item = read_u32(&mut r)?;
        let mut tail = [0u8; 2];
        r.read_exact(&mut tail)?;
        let label = match tail[0] {
            0 => false,
            1 => true,
            other => return Err(Error::Format(format!("bad label byte {other}"))),
        };
        let split = Split::from_tag(tail[1])
            .ok_or_else(|| Error::Format(format!("bad split byte {}", tail[1])))?;
        interactions.push(Interaction {
            user,
            item,
            label,
            split,
        });
    }
    RatingDataset::from_interactions(user_tokens, item_tokens, interactions)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn parses_movielens_line() {
        let out = load_ratings(
            Cursor::new("1,296,5.0,1147880044\n"),
            RatingsFormat::MovieLens,
        )
        .unwrap();
        assert_eq!(out.skipped, 0);
        assert_eq!(
            out.ratings,
            vec![RawRating {
                user: "1".into(),
                item: "296".into(),
                rating: 5.0,
                timestamp: 1147880044
            }]
        );
    }

    #[test]
    fn skips_header_without_counting() {
        let out = load_ratings(
            Cursor::new("userId,movieId,rating,timestamp\n1,2,3.5,100\n"),
            RatingsFormat::MovieLens,
        )
        .unwrap();
        assert_eq!(out.skipped, 0);
        assert_eq!(out.ratings.len(), 1);
    }

    #[test]
    fn empty_stream_is_empty() {
        let out = load_ratings(Cursor::new(""), RatingsFormat::MovieLens).unwrap();
        assert!(out.ratings.is_empty());
        assert_eq!(out.skipped, 0);
    }

    #[test]
    fn one_malformed_in_a_thousand_is_tolerated() {
        let mut text = String::new();
        for k in 0..999 {
            text.push_str(&format!("{k},1,4.0,{k}\n"));
        }
        text.push_str("oops,not,a,row,at,all\n");
        let out = load_ratings(Cursor::new(text), RatingsFormat::MovieLens).unwrap();
        assert_eq!(out.ratings.len(), 999);
        assert_eq!(out.skipped, 1);
    }

    #[test]
    fn too_many_malformed_lines_errors() {
        let text = "1,1,5.0,10\ngarbage\nmore garbage\n";
        assert!(load_ratings(Cursor::new(text), RatingsFormat::MovieLens).is_err());
    }

    #[test]
    fn parses_netflix_format() {
        let text = "1:\n30878,4,2005-12-26\n2647871,1,2005-12-27\n2:\n1283744,3,2004-08-02\n";
        let out = load_ratings(Cursor::new(text), RatingsFormat::NetflixTxt).unwrap();
        assert_eq!(out.skipped, 0);
        assert_eq!(out.ratings.len(), 3);
        assert_eq!(out.ratings[0].item, "1");
        assert_eq!(out.ratings[0].user, "30878");
        assert_eq!(out.ratings[2].item, "2");
        // 2005-12-26 midnight UTC
        assert_eq!(out.ratings[0].timestamp, 1135555200);
    }

    #[test]
    fn cache_round_trips_and_is_deterministic() {
        let train: Vec<(String, String, bool)> = (0..6)
            .flat_map(|u| (0..6).map(move |i| (format!("u{u}"), format!("it{i}"), (u + i) % 2 == 0)))
            .collect();
        let validation = vec![("u0".to_string(), "it1".to_string(), true)];
        let test = vec![("u1".to_string(), "it2".to_string(), false)];
        let ds = RatingDataset::from_token_parts(&train, &validation, &test).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.mdc");
        let p2 = dir.path().join("b.mdc");
        write_dataset_cache(&ds, &p1).unwrap();
        write_dataset_cache(&ds, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

        let back = read_dataset_cache(&p1).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn cache_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.mdc");
        std::fs::write(&p, b"NOTMAGIC....").unwrap();
        assert!(matches!(read_dataset_cache(&p), Err(Error::Format(_))));
    }
}
