//! Download caching against a local HTTP server.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use seggraph::datasets::{fetch_and_cache, sha256_file, FetchOptions};
use seggraph::Error;

/// Serves `body` for every request until the test process exits.
fn serve(body: Vec<u8>) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut buf = [0u8; 4096];
            let mut request = Vec::new();
            while !request.windows(4).any(|w| w == b"\r\n\r\n") {
                match stream.read(&mut buf) {
                    Ok(0) | Err(_) => break,
                    Ok(n) => request.extend_from_slice(&buf[..n]),
                }
            }
            counter.fetch_add(1, Ordering::SeqCst);
            let head = format!(
                "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                body.len()
            );
            let _ = stream.write_all(head.as_bytes());
            let _ = stream.write_all(&body);
        }
    });
    (format!("http://{addr}"), hits)
}

fn hex_sha(bytes: &[u8]) -> String {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("b");
    std::fs::write(&p, bytes).unwrap();
    sha256_file(&p).unwrap()
}

fn online() -> FetchOptions {
    FetchOptions {
        extract: false,
        ..Default::default()
    }
}

#[test]
fn downloads_once_then_serves_from_disk() {
    let body = b"1 2\n2 3\n".to_vec();
    let (base, hits) = serve(body.clone());
    let dir = tempfile::tempdir().unwrap();
    let url = format!("{base}/edges.txt");
    let sha = hex_sha(&body);
    let path = fetch_and_cache(&url, dir.path(), Some(&sha), online()).unwrap();
    assert_eq!(path, dir.path().join("edges.txt"));
    assert_eq!(std::fs::read(&path).unwrap(), body);
    fetch_and_cache(&url, dir.path(), Some(&sha), online()).unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    let offline = FetchOptions {
        offline: true,
        ..online()
    };
    fetch_and_cache(&url, dir.path(), Some(&sha), offline).unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn checksum_mismatch_fails_and_removes_the_file() {
    let (base, _) = serve(b"tampered".to_vec());
    let dir = tempfile::tempdir().unwrap();
    let url = format!("{base}/data.bin");
    let wrong = "0".repeat(64);
    let err = fetch_and_cache(&url, dir.path(), Some(&wrong), online()).unwrap_err();
    match err {
        Error::Checksum { expected, actual, .. } => {
            assert_eq!(expected, wrong);
            assert_eq!(actual, hex_sha(b"tampered"));
        }
        other => panic!("unexpected error {other}"),
    }
    assert!(!dir.path().join("data.bin").exists());
}

#[test]
fn offline_without_a_cached_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let options = FetchOptions {
        offline: true,
        ..online()
    };
    let err = fetch_and_cache("http://127.0.0.1:9/none.txt", dir.path(), None, options).unwrap_err();
    assert!(matches!(err, Error::Network { .. }), "{err}");
}

#[test]
fn unreachable_host_is_a_network_error() {
    let dir = tempfile::tempdir().unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let err = fetch_and_cache(&format!("http://{addr}/x.txt"), dir.path(), None, online()).unwrap_err();
    assert!(matches!(err, Error::Network { .. }), "{err}");
    assert!(!dir.path().join("x.txt").exists());
}

fn zip_bytes() -> Vec<u8> {
    let mut cursor = std::io::Cursor::new(Vec::new());
    {
        let mut z = zip::ZipWriter::new(&mut cursor);
        let opts = zip::write::SimpleFileOptions::default();
        z.add_directory("TOY/", opts).unwrap();
        z.start_file("TOY/TOY_A.txt", opts).unwrap();
        z.write_all(b"1, 2\n2, 1\n").unwrap();
        z.finish().unwrap();
    }
    cursor.into_inner()
}

fn tar_gz_bytes() -> Vec<u8> {
    let enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
    let mut tar = tar::Builder::new(enc);
    let data = b"hello\n";
    let mut header = tar::Header::new_gnu();
    header.set_size(data.len() as u64);
    header.set_mode(0o644);
    header.set_cksum();
    tar.append_data(&mut header, "inner/readme.txt", &data[..]).unwrap();
    tar.into_inner().unwrap().finish().unwrap()
}

fn assert_file(path: &Path, contents: &[u8]) {
    assert_eq!(std::fs::read(path).unwrap(), contents, "{}", path.display());
}

#[test]
fn archives_are_unpacked_next_to_the_download() {
    let dir = tempfile::tempdir().unwrap();
    let extract = FetchOptions::default();

    let (base, _) = serve(zip_bytes());
    fetch_and_cache(&format!("{base}/TOY.zip"), dir.path(), None, extract).unwrap();
    assert_file(&dir.path().join("TOY/TOY_A.txt"), b"1, 2\n2, 1\n");

    let (base, _) = serve(tar_gz_bytes());
    fetch_and_cache(&format!("{base}/bundle.tar.gz"), dir.path(), None, extract).unwrap();
    assert_file(&dir.path().join("inner/readme.txt"), b"hello\n");

    // A second fetch does not unpack again.
    std::fs::remove_file(dir.path().join("inner/readme.txt")).unwrap();
    fetch_and_cache(&format!("{base}/bundle.tar.gz"), dir.path(), None, extract).unwrap();
    assert!(!dir.path().join("inner/readme.txt").exists());
}

#[test]
fn file_urls_are_copied() {
    let src = tempfile::tempdir().unwrap();
    let file = src.path().join("local.txt");
    std::fs::write(&file, b"abc").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let url = format!("file://{}", file.display());
    let got = fetch_and_cache(&url, dir.path(), Some(&hex_sha(b"abc")), online()).unwrap();
    assert_file(&got, b"abc");
}
