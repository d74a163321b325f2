//! Flat files exchanged between subcommands.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use recmia_core::data::{parse_ratings, write_ratings, Delimiter, RatingDataset};

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

/// Read a `user,item,score` file written by [`save_ratings`].
pub fn load_ratings(path: &Path) -> Result<RatingDataset> {
    let parsed = parse_ratings(open(path)?, Delimiter::Comma).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(r) = parsed.report.rejected.first() {
        bail!("{}: line {}: {}", path.display(), r.line, r.reason);
    }
    Ok(parsed.dataset)
}

pub fn save_ratings(ds: &RatingDataset, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    write_ratings(ds, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Reload `ds` from its own serialization, so its user and item indexing is
/// exactly what a later [`load_ratings`] of the written file produces.
pub fn canonical(ds: &RatingDataset) -> Result<RatingDataset> {
    let mut bytes = Vec::new();
    write_ratings(ds, &mut bytes)?;
    Ok(parse_ratings(bytes.as_slice(), Delimiter::Comma)?.dataset)
}

pub const LIST_HEADER: &str = "user_id,rank,item_id";

/// Recommendation lists in first-seen user order.
#[derive(Debug, Default, PartialEq)]
pub struct Lists {
    pub users: Vec<String>,
    pub items: HashMap<String, Vec<String>>,
}

impl Lists {
    pub fn push(&mut self, user: &str, items: Vec<String>) {
        if !self.items.contains_key(user) {
            self.users.push(user.to_owned());
        }
        self.items.insert(user.to_owned(), items);
    }

    pub fn get(&self, user: &str) -> Option<&[String]> {
        self.items.get(user).map(Vec::as_slice)
    }
}

pub fn write_lists<W: Write>(lists: &Lists, mut out: W) -> Result<()> {
    writeln!(out, "{LIST_HEADER}")?;
    for user in &lists.users {
        for (rank, item) in lists.items[user].iter().enumerate() {
            writeln!(out, "{user},{},{item}", rank + 1)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Rows may arrive in any order; ranks of a user must be exactly `1..=n`.
pub fn read_lists<R: BufRead>(input: R) -> Result<Lists> {
    let mut ranked: HashMap<String, Vec<(usize, String)>> = HashMap::new();
    let mut order = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || (n == 0 && line.trim() == LIST_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [user, rank, item] = fields[..] else {
            bail!("line {}: expected user_id,rank,item_id", n + 1);
        };
        let rank: usize = rank.parse().with_context(|| format!("line {}: bad rank", n + 1))?;
        let entry = ranked.entry(user.to_owned()).or_insert_with(|| {
            order.push(user.to_owned());
            Vec::new()
        });
        entry.push((rank, item.to_owned()));
    }
    let mut lists = Lists::default();
    for user in order {
        let mut rows = ranked.remove(&user).unwrap_or_default();
        rows.sort_by_key(|r| r.0);
        if rows.iter().enumerate().any(|(i, r)| r.0 != i + 1) {
            bail!("ranks of user {user} are not 1..={}", rows.len());
        }
        lists.push(&user, rows.into_iter().map(|r| r.1).collect());
    }
    Ok(lists)
}

pub const HOLDOUT_HEADER: &str = "user_id,item_id";

pub fn write_holdout<W: Write>(rows: &[(String, String)], mut out: W) -> Result<()> {
    writeln!(out, "{HOLDOUT_HEADER}")?;
    for (u, i) in rows {
        writeln!(out, "{u},{i}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_holdout<R: BufRead>(input: R) -> Result<HashMap<String, String>> {
    let mut out = HashMap::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || (n == 0 && line.trim() == HOLDOUT_HEADER) {
            continue;
        }
        let Some((u, i)) = line.split_once(',') else {
            bail!("line {}: expected user_id,item_id", n + 1);
        };
        out.insert(u.trim().to_owned(), i.trim().to_owned());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_round_trip_and_accept_shuffled_rows() {
        let mut lists = Lists::default();
        lists.push("u2", vec!["b".into(), "a".into()]);
        lists.push("u1", vec!["c".into()]);
        let mut bytes = Vec::new();
        write_lists(&lists, &mut bytes).unwrap();
        assert_eq!(
            String::from_utf8(bytes.clone()).unwrap(),
            "user_id,rank,item_id\nu2,1,b\nu2,2,a\nu1,1,c\n"
        );
        assert_eq!(read_lists(bytes.as_slice()).unwrap(), lists);

        let shuffled = read_lists("u2,2,a\nu1,1,c\nu2,1,b\n".as_bytes()).unwrap();
        assert_eq!(shuffled.get("u2").unwrap(), ["b", "a"]);
    }

    #[test]
    fn rank_gaps_are_rejected() {
        assert!(read_lists("u1,1,a\nu1,3,b\n".as_bytes()).is_err());
        assert!(read_lists("u1,x,a\n".as_bytes()).is_err());
        assert!(read_lists("u1,1\n".as_bytes()).is_err());
    }

    #[test]
    fn holdout_round_trip() {
        let rows = vec![("u1".to_owned(), "i3".to_owned())];
        let mut bytes = Vec::new();
        write_holdout(&rows, &mut bytes).unwrap();
        assert_eq!(read_holdout(bytes.as_slice()).unwrap()["u1"], "i3");
    }

    #[test]
    fn canonical_matches_file_order() {
        let ds = RatingDataset::from_records([("b", "y", 3.0), ("a", "x", 4.5), ("b", "x", 1.0)]).unwrap();
        let sub = ds.retain_users(|u| ds.user_id(u) == "b");
        let c = canonical(&sub).unwrap();
        let mut bytes = Vec::new();
        write_ratings(&c, &mut bytes).unwrap();
        let again = parse_ratings(bytes.as_slice(), Delimiter::Comma).unwrap().dataset;
        assert_eq!(c.item_ids(), again.item_ids());
        assert_eq!(c.user_ids(), again.user_ids());
    }
}
