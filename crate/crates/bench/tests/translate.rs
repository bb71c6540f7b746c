use arranger_bench::translate::{write_dictionary, Dictionary, Reply, TranslateClient, TranslateServer};
use arranger_bench::BenchError;
use arranger_core::crypto::{sha256, CompressedBatch};

fn fixture() -> Vec<(arranger_core::Digest, CompressedBatch)> {
    (0..5u64)
        .map(|id| {
            let blob = CompressedBatch {
                id,
                bytes: vec![id as u8; 100 * id as usize + 1],
            };
            (sha256(&[&id.to_be_bytes()]), blob)
        })
        .collect()
}

fn load(dir: &std::path::Path) -> Dictionary {
    let items = fixture();
    let (h, c) = (dir.join("hashes.txt"), dir.join("compressed.bin"));
    write_dictionary(&h, &c, items.iter().map(|(d, b)| (*d, b))).unwrap();
    Dictionary::load(&h, &c).unwrap()
}

#[test]
fn known_keys_return_stored_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let server = TranslateServer::spawn(load(dir.path())).unwrap();
    let mut client = TranslateClient::connect(server.addr()).unwrap();
    for (d, b) in fixture() {
        assert_eq!(client.translate(b.id, &d).unwrap(), Reply::Found(b));
    }
}

#[test]
fn unknown_keys_return_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let server = TranslateServer::spawn(load(dir.path())).unwrap();
    let mut client = TranslateClient::connect(server.addr()).unwrap();
    let wrong = sha256(&[b"nope"]);
    assert_eq!(
        client.translate(99, &wrong).unwrap(),
        Reply::NotFound { id: 99, digest: wrong }
    );
    let (d, _) = &fixture()[1];
    assert_eq!(
        client.translate(2, d).unwrap(),
        Reply::NotFound { id: 2, digest: *d }
    );
    assert!(client.fetch(1, d).unwrap().is_some());
}

#[test]
fn server_handles_successive_connections() {
    let dir = tempfile::tempdir().unwrap();
    let server = TranslateServer::spawn(load(dir.path())).unwrap();
    let (d, b) = &fixture()[3];
    for _ in 0..3 {
        let mut client = TranslateClient::connect(server.addr()).unwrap();
        assert_eq!(client.translate(3, d).unwrap(), Reply::Found(b.clone()));
    }
}

#[test]
fn malformed_dictionary_lines_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (h, c) = (dir.path().join("h.txt"), dir.path().join("c.bin"));
    std::fs::write(&c, []).unwrap();
    std::fs::write(&h, "0 zz\n").unwrap();
    assert!(matches!(Dictionary::load(&h, &c), Err(BenchError::Dictionary { line: 1, .. })));
    std::fs::write(&h, format!("4 {}\n", sha256(&[b"x"]).to_hex())).unwrap();
    assert!(matches!(Dictionary::load(&h, &c), Err(BenchError::MissingBatch(4))));
}
