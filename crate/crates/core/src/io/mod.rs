//! On-disk formats.

mod binary;
mod tables;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::block::DreamParams;
use crate::embedding::Embedding;

pub use binary::{
    read_checkpoint_from, read_embeddings_binary, record_id, split_record_id, write_checkpoint_to,
    write_embeddings_binary, CHECKPOINT_MAGIC, EMBEDDING_MAGIC, FORMAT_VERSION,
};
pub use tables::{
    read_embeddings_csv, read_face_model, read_landmarks, read_pairs, read_pose_yaws, write_embeddings_csv,
    write_face_model, write_landmarks, write_pairs, write_poses, write_protocol, PoseRow,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Format(String),
    #[error("{}: {source}", path.display())]
    At {
        path: PathBuf,
        #[source]
        source: Box<IoError>,
    },
}

impl IoError {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        IoError::Format(msg.into())
    }

    pub fn at(self, path: &Path) -> Self {
        IoError::At {
            path: path.to_path_buf(),
            source: Box::new(self),
        }
    }

    /// True for I/O failures as opposed to malformed content.
    pub fn is_io(&self) -> bool {
        match self {
            IoError::Io(_) => true,
            IoError::Format(_) => false,
            IoError::At { source, .. } => source.is_io(),
        }
    }
}

impl From<csv::Error> for IoError {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => IoError::Io(io),
            other => IoError::Format(format!("{other:?}")),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, IoError> {
    File::open(path).map(BufReader::new).map_err(|e| IoError::Io(e).at(path))
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path).map(BufWriter::new).map_err(|e| IoError::Io(e).at(path))
}

/// Runs a reader over the file at `path`, tagging errors with the path.
pub fn read_file<T>(path: &Path, f: impl FnOnce(BufReader<File>) -> Result<T, IoError>) -> Result<T, IoError> {
    f(open(path)?).map_err(|e| e.at(path))
}

/// Runs a writer into a fresh file at `path`, tagging errors with the path.
pub fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<(), IoError>) -> Result<(), IoError> {
    let mut w = create(path)?;
    f(&mut w).map_err(|e| e.at(path))
}

/// Reads binary or CSV embeddings, detected by the magic bytes.
pub fn load_embeddings(path: &Path) -> Result<Vec<Embedding>, IoError> {
    read_file(path, |mut r| {
        let mut head = [0u8; 4];
        let mut got = 0;
        while got < 4 {
            match r.read(&mut head[got..])? {
                0 => break,
                n => got += n,
            }
        }
        let rest = (&head[..got]).chain(r);
        if &head[..got] == EMBEDDING_MAGIC {
            read_embeddings_binary(rest)
        } else {
            read_embeddings_csv(rest)
        }
    })
}

/// Binary unless the path ends in `.csv`.
pub fn save_embeddings(path: &Path, embeddings: &[Embedding]) -> Result<(), IoError> {
    let csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    write_file(path, |w| {
        if csv {
            write_embeddings_csv(w, embeddings)
        } else {
            write_embeddings_binary(w, embeddings)
        }
    })
}

pub fn load_checkpoint(path: &Path) -> Result<DreamParams, IoError> {
    read_file(path, read_checkpoint_from)
}

pub fn save_checkpoint(path: &Path, params: &DreamParams) -> Result<(), IoError> {
    write_file(path, |w| write_checkpoint_to(w, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_format_from_content() {
        let dir = tempfile::tempdir().unwrap();
        let es = vec![Embedding::new(vec![1.0, 2.0]).with_id("x").with_subject("s").with_yaw(0.5)];
        let bin = dir.path().join("e.bin");
        let csv = dir.path().join("e.csv");
        save_embeddings(&bin, &es).unwrap();
        save_embeddings(&csv, &es).unwrap();
        assert_eq!(load_embeddings(&bin).unwrap(), es);
        assert_eq!(load_embeddings(&csv).unwrap(), es);
        // a csv payload under a non-csv name still loads
        let renamed = dir.path().join("e.dat");
        std::fs::copy(&csv, &renamed).unwrap();
        assert_eq!(load_embeddings(&renamed).unwrap(), es);
    }

    #[test]
    fn errors_name_the_path() {
        let err = load_embeddings(Path::new("/nonexistent/e.bin")).unwrap_err();
        assert!(err.is_io());
        assert!(err.to_string().contains("/nonexistent/e.bin"));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "nope\n").unwrap();
        let err = load_embeddings(&p).unwrap_err();
        assert!(!err.is_io());
        assert!(err.to_string().contains("bad.csv"));
    }
}
