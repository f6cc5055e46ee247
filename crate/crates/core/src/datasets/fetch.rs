//! Downloading and unpacking raw dataset archives.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use flate2::read::GzDecoder;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FetchOptions {
    /// Never touch the network; only files already on disk are used.
    pub offline: bool,
    /// Unpack `.zip`, `.tar.gz` and `.tgz` files next to the download.
    pub extract: bool,
    /// How long to wait for another process holding the destination lock.
    pub lock_timeout: Duration,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self {
            offline: false,
            extract: true,
            lock_timeout: Duration::from_secs(600),
        }
    }
}

struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(path: PathBuf, timeout: Duration) -> Result<Self> {
        let start = Instant::now();
        loop {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    let _ = writeln!(f, "{}", std::process::id());
                    return Ok(Self(path));
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    if start.elapsed() > timeout {
                        return Err(Error::io(
                            &path,
                            io::Error::new(
                                io::ErrorKind::WouldBlock,
                                "lock still held; remove it if no download is running",
                            ),
                        ));
                    }
                    thread::sleep(Duration::from_millis(50));
                }
                Err(e) => return Err(Error::io(&path, e)),
            }
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Hex SHA-256 of a file.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn verify(path: &Path, expected: Option<&str>) -> Result<()> {
    let Some(expected) = expected else {
        return Ok(());
    };
    let actual = sha256_file(path)?;
    if actual.eq_ignore_ascii_case(expected) {
        return Ok(());
    }
    let _ = fs::remove_file(path);
    Err(Error::Checksum {
        path: path.to_path_buf(),
        expected: expected.to_ascii_lowercase(),
        actual,
    })
}

fn file_name(url: &str) -> Result<&str> {
    url.trim_end_matches('/')
        .rsplit('/')
        .next()
        .filter(|s| !s.is_empty() && !s.contains(':'))
        .ok_or_else(|| Error::invalid(format!("cannot derive a file name from {url}")))
}

fn download(url: &str, target: &Path) -> Result<()> {
    let partial = target.with_extension("part");
    let net = |message: String| Error::Network {
        url: url.to_string(),
        message,
    };
    let mut reader: Box<dyn Read> = if let Some(local) = url.strip_prefix("file://") {
        Box::new(fs::File::open(local).map_err(|e| net(e.to_string()))?)
    } else {
        let response = ureq::get(url).call().map_err(|e| {
            net(format!(
                "{e}; check the connection or place the file at {} and retry offline",
                target.display()
            ))
        })?;
        Box::new(response.into_body().into_reader())
    };
    let mut out = fs::File::create(&partial).map_err(|e| Error::io(&partial, e))?;
    io::copy(&mut reader, &mut out).map_err(|e| {
        let _ = fs::remove_file(&partial);
        net(e.to_string())
    })?;
    out.sync_all().map_err(|e| Error::io(&partial, e))?;
    fs::rename(&partial, target).map_err(|e| Error::io(target, e))
}

fn extract(archive: &Path, into: &Path) -> Result<()> {
    let name = archive.to_string_lossy();
    let file = fs::File::open(archive).map_err(|e| Error::io(archive, e))?;
    if name.ends_with(".zip") {
        zip::ZipArchive::new(file)
            .and_then(|mut z| z.extract(into))
            .map_err(|e| Error::dataset(archive, format!("cannot unpack zip: {e}")))
    } else if name.ends_with(".tar.gz") || name.ends_with(".tgz") {
        tar::Archive::new(GzDecoder::new(file))
            .unpack(into)
            .map_err(|e| Error::dataset(archive, format!("cannot unpack tar.gz: {e}")))
    } else {
        Ok(())
    }
}

/// Makes `url` available as `destination/<file name>` and returns that path.
///
/// A file already present (and matching `expected_sha256`, when given) is
/// used as is. A checksum mismatch deletes the file and fails. Archives are
/// unpacked into `destination` once; a marker file records that.
pub fn fetch_and_cache(
    url: &str,
    destination: &Path,
    expected_sha256: Option<&str>,
    options: FetchOptions,
) -> Result<PathBuf> {
    let name = file_name(url)?;
    fs::create_dir_all(destination).map_err(|e| Error::io(destination, e))?;
    let target = destination.join(name);
    let _lock = LockGuard::acquire(destination.join(format!(".{name}.lock")), options.lock_timeout)?;

    if target.exists() {
        verify(&target, expected_sha256)?;
        log::debug!("using cached {}", target.display());
    } else if options.offline {
        return Err(Error::Network {
            url: url.to_string(),
            message: format!("offline and {} does not exist", target.display()),
        });
    } else {
        log::info!("downloading {url}");
        download(url, &target)?;
        verify(&target, expected_sha256)?;
    }

    if options.extract {
        let marker = destination.join(format!(".{name}.extracted"));
        if !marker.exists() {
            extract(&target, destination)?;
            fs::write(&marker, b"").map_err(|e| Error::io(&marker, e))?;
        }
    }
    Ok(target)
}
