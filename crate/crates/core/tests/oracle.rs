use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use decontext_core::oracle::{
    answer_query, batch_answer, FixtureBackend, NoisyPlantedBackend, OracleError, RemoteBackend, RemoteConfig,
    RetryPolicy,
};
use decontext_core::{
    Answer, AnswerCache, ElementaryStatement, ImageRef, OracleBackend, Query, StatementKind,
};
use proptest::prelude::*;

fn query(text: &str, index: usize) -> Query {
    Query {
        statement: ElementaryStatement {
            kind: StatementKind::Object,
            x: text.into(),
            y: None,
            z: None,
            source_nodes: vec![0],
        },
        text: text.into(),
        index,
    }
}

/// Deterministic backend that counts calls and the peak number in flight.
#[derive(Default)]
struct Instrumented {
    calls: AtomicUsize,
    inflight: AtomicUsize,
    peak: AtomicUsize,
    delay_ms: u64,
}

impl OracleBackend for Instrumented {
    fn id(&self) -> &str {
        "instrumented"
    }

    fn score(&self, image: &ImageRef, text: &str) -> Result<f64, OracleError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.inflight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        thread::sleep(Duration::from_millis(self.delay_ms));
        self.inflight.fetch_sub(1, Ordering::SeqCst);
        let h = image.as_str().len() * 31 + text.len() * 7;
        Ok((h % 101) as f64 / 100.0)
    }
}

fn img() -> ImageRef {
    ImageRef::new("img1").unwrap()
}

#[test]
fn empty_batch_is_empty() {
    let b = Instrumented::default();
    let out = batch_answer(&b, &AnswerCache::in_memory(), &img(), &[], 0.5, 4).unwrap();
    assert!(out.is_empty());
    assert_eq!(b.calls.load(Ordering::SeqCst), 0);
}

#[test]
fn cached_queries_skip_the_backend() {
    let cache = AnswerCache::in_memory();
    let queries: Vec<Query> = (0..3).map(|i| query(&format!("q{i}"), i)).collect();
    for q in &queries {
        cache.insert("img1", &q.text, "instrumented", 0.7).unwrap();
    }
    let b = Instrumented::default();
    let out = batch_answer(&b, &cache, &img(), &queries, 0.5, 4).unwrap();
    assert_eq!(out.len(), 3);
    assert!(out.iter().all(|a| a.as_ref().unwrap().answer == Answer::Yes));
    assert_eq!(b.calls.load(Ordering::SeqCst), 0);
}

#[test]
fn inflight_cap_is_respected() {
    let b = Instrumented {
        delay_ms: 30,
        ..Default::default()
    };
    let queries: Vec<Query> = (0..5).map(|i| query(&format!("query {i}"), i)).collect();
    let out = batch_answer(&b, &AnswerCache::in_memory(), &img(), &queries, 0.5, 2).unwrap();
    assert_eq!(out.len(), 5);
    assert_eq!(b.calls.load(Ordering::SeqCst), 5);
    let peak = b.peak.load(Ordering::SeqCst);
    assert!((1..=2).contains(&peak), "peak {peak}");
}

#[test]
fn cache_persists_across_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let q = query("Is the photo about dog?", 0);
    let fixture = FixtureBackend::new("fx").with_entry("img1", &q.text, 0.9);
    {
        let cache = AnswerCache::open(&path).unwrap();
        answer_query(&fixture, &cache, &img(), &q, 0.5).unwrap();
    }
    let cache = AnswerCache::open(&path).unwrap();
    assert_eq!(cache.get("img1", &q.text, "fx"), Some(0.9));
    // Another oracle id does not share entries.
    assert_eq!(cache.get("img1", &q.text, "other"), None);
    // The empty fixture would fail; the cache answers instead.
    let empty = FixtureBackend::new("fx");
    let a = answer_query(&empty, &cache, &img(), &q, 0.5).unwrap();
    assert_eq!(a.raw_score, 0.9);
}

#[test]
fn missing_fixture_entry_is_a_per_item_error() {
    let fixture = FixtureBackend::new("fx").with_entry("img1", "a", 0.2);
    let out = batch_answer(
        &fixture,
        &AnswerCache::in_memory(),
        &img(),
        &[query("a", 0), query("b", 1)],
        0.5,
        2,
    )
    .unwrap();
    assert_eq!(out[0].as_ref().unwrap().answer, Answer::No);
    assert!(matches!(out[1], Err(OracleError::NoFixtureEntry { .. })));
}

#[test]
fn invalid_arguments_are_rejected() {
    let b = Instrumented::default();
    let cache = AnswerCache::in_memory();
    assert!(matches!(
        batch_answer(&b, &cache, &img(), &[query("a", 0)], 1.5, 1),
        Err(OracleError::InvalidThreshold(_))
    ));
    assert!(matches!(
        batch_answer(&b, &cache, &img(), &[query("a", 0)], 0.5, 0),
        Err(OracleError::ZeroInflight)
    ));
    assert!(matches!(ImageRef::new(""), Err(OracleError::EmptyImageRef)));
}

#[test]
fn planted_backend_without_noise_reproduces_truth() {
    let mut b = NoisyPlantedBackend::new("planted", 0.0, 3);
    for i in 0..200 {
        b.plant("img", &format!("q{i}"), i % 3 == 0);
    }
    let image = ImageRef::new("img").unwrap();
    for i in 0..200 {
        let s = b.score(&image, &format!("q{i}")).unwrap();
        assert_eq!(s >= 0.5, i % 3 == 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn warm_cache_is_transparent_and_order_preserving(
        texts in proptest::collection::vec("[a-z ]{1,12}", 0..12),
        inflight in 1usize..5,
    ) {
        let queries: Vec<Query> = texts.iter().enumerate().map(|(i, t)| query(t, i)).collect();
        let b = Instrumented::default();
        let cache = AnswerCache::in_memory();
        let cold = batch_answer(&b, &cache, &img(), &queries, 0.5, inflight).unwrap();
        let warm = batch_answer(&b, &cache, &img(), &queries, 0.5, inflight).unwrap();
        prop_assert_eq!(&cold, &warm);
        for (q, a) in queries.iter().zip(&cold) {
            let direct = b.score(&img(), &q.text).unwrap();
            prop_assert_eq!(a.as_ref().unwrap().raw_score, direct);
        }
    }
}

/// Serves canned HTTP responses, one connection each, and records the
/// request bodies.
fn serve(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/score", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            bodies.push(String::from_utf8(buf).unwrap());
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        bodies
    });
    (url, handle)
}

fn fast_config(url: String) -> RemoteConfig {
    RemoteConfig {
        timeout_ms: 2_000,
        retry: RetryPolicy {
            attempts: 3,
            base_backoff_ms: 1,
        },
        ..RemoteConfig::new(url)
    }
}

#[test]
fn remote_backend_posts_and_parses_score() {
    let (url, server) = serve(vec![(200, r#"{"score":0.8}"#.into())]);
    let backend = RemoteBackend::new("remote", fast_config(url));
    assert_eq!(backend.score(&img(), "Is the photo about dog?").unwrap(), 0.8);
    let bodies = server.join().unwrap();
    let sent: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(sent["image"], "img1");
    assert_eq!(sent["text"], "Is the photo about dog?");
}

#[test]
fn remote_backend_retries_server_errors() {
    let (url, server) = serve(vec![
        (503, "{}".into()),
        (500, "{}".into()),
        (200, r#"{"score":0.3}"#.into()),
    ]);
    let backend = RemoteBackend::new("remote", fast_config(url));
    assert_eq!(backend.score(&img(), "q").unwrap(), 0.3);
    assert_eq!(server.join().unwrap().len(), 3);
}

#[test]
fn remote_backend_gives_up_after_three_attempts() {
    let (url, server) = serve(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
    let backend = RemoteBackend::new("remote", fast_config(url));
    let err = backend.score(&img(), "q").unwrap_err();
    assert!(matches!(err, OracleError::BackendUnavailable { attempts: 3, .. }), "{err}");
    server.join().unwrap();
}

#[test]
fn unreachable_remote_is_reported_per_item() {
    // Bind then drop to obtain a port with nothing listening.
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let backend = RemoteBackend::new("remote", fast_config(format!("http://127.0.0.1:{port}/score")));
    let out = batch_answer(
        &backend,
        &AnswerCache::in_memory(),
        &img(),
        &[query("a", 0), query("b", 1)],
        0.5,
        2,
    )
    .unwrap();
    for item in out {
        assert!(matches!(item, Err(OracleError::BackendUnavailable { attempts: 3, .. })));
    }
}

#[test]
fn retry_policy_backs_off_exponentially() {
    let policy = RetryPolicy {
        attempts: 3,
        base_backoff_ms: 20,
    };
    let calls = Mutex::new(0);
    let start = std::time::Instant::now();
    let r: Result<(), (&str, u32)> = policy.run(
        || {
            *calls.lock().unwrap() += 1;
            Err("down")
        },
        |_| true,
    );
    assert_eq!(r, Err(("down", 3)));
    assert_eq!(*calls.lock().unwrap(), 3);
    // 20 ms + 40 ms of sleep between the three attempts.
    assert!(start.elapsed() >= Duration::from_millis(60));
}
