use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{Corpus, CorpusError, Tweet, User};

pub const TWEETS_FILE: &str = "tweets.jsonl";
pub const USERS_FILE: &str = "users.jsonl";

/// Read `tweets.jsonl` and `users.jsonl` from `dir`.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let dir = dir.as_ref();
    let tweets: Vec<Tweet> = read_jsonl(&dir.join(TWEETS_FILE))?;
    let users: Vec<User> = read_jsonl(&dir.join(USERS_FILE))?;
    Corpus::new(tweets, users)
}

/// Write the corpus back in the same schema (UTF-8, LF line endings).
pub fn save_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_jsonl(&dir.join(TWEETS_FILE), corpus.tweets())?;
    write_jsonl(&dir.join(USERS_FILE), corpus.users())?;
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
            file: path.to_path_buf(),
            line: i + 1,
            field: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
