use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use evolab::gateway::*;

#[test]
fn fixture_hit_is_deterministic() {
    let mut fx = FixtureTable::default();
    fx.insert("encode.insight", "prompt body", "- keep the key");
    let gw = Gateway::stub_strict(fx);
    let p = CompletionParams::tagged("encode.insight");
    let a = gw.complete("prompt body", &p).unwrap();
    let b = gw.complete("prompt body", &p).unwrap();
    assert_eq!(a.0, "- keep the key");
    assert_eq!(a, b);
    assert_eq!(a.1.tokens_in, estimate_tokens("prompt body"));
    assert_eq!(a.1.tokens_out, estimate_tokens("- keep the key"));
}

#[test]
fn strict_miss_names_the_tag() {
    let gw = Gateway::stub_strict(FixtureTable::default());
    let err = gw.complete("anything", &CompletionParams::tagged("diagnose")).unwrap_err();
    assert!(err.to_string().contains("diagnose"), "{err}");
    // the lenient stub synthesizes instead
    assert!(Gateway::stub().complete("anything", &CompletionParams::tagged("diagnose")).is_ok());
}

#[test]
fn wildcard_covers_a_whole_tag() {
    let mut fx = FixtureTable::default();
    fx.insert_wildcard("judge", "CORRECT");
    fx.insert("judge", "special", "INCORRECT");
    let gw = Gateway::stub_strict(fx.clone());
    let p = CompletionParams::tagged("judge");
    assert_eq!(gw.complete("x", &p).unwrap().0, "CORRECT");
    assert_eq!(gw.complete("special", &p).unwrap().0, "INCORRECT");
    assert!(gw.complete("x", &CompletionParams::tagged("design")).is_err());
    assert_eq!(FixtureTable::parse(&fx.to_jsonl()).unwrap(), fx);
}

#[test]
fn price_formula() {
    let p = PriceTable::new(0.25, 2.00);
    assert!((p.cost(1000, 500) - 0.00125).abs() < 1e-12);
    let gw = Gateway::stub().with_prices(p);
    let u = gw.record("agent", 1000, 500, 0.0);
    assert!((u.cost_usd - 0.00125).abs() < 1e-12);
    assert!((gw.spend() - 0.00125).abs() < 1e-12);
    // without prices the cost dimension is the token count
    let free = Gateway::stub();
    free.record("agent", 1000, 500, 0.0);
    assert_eq!(free.spend(), 1500.0);
}

#[test]
fn ledger_is_additive_under_concurrency() {
    let gw = Gateway::stub().with_prices(PriceTable::new(1.0, 3.0));
    let tags = ["agent", "encode.tips", "judge", "design"];
    thread::scope(|s| {
        for t in 0..8 {
            let gw = gw.clone();
            s.spawn(move || {
                for i in 0..100u64 {
                    gw.record(tags[(t + i as usize) % 4], i, 2 * i, 0.0);
                }
            });
        }
    });
    let ledger = gw.usage_ledger();
    let mut sum = CompletionUsage::default();
    for u in ledger.values() {
        sum.add(u);
    }
    let total = gw.total();
    assert_eq!((sum.tokens_in, sum.tokens_out), (total.tokens_in, total.tokens_out));
    assert_eq!(total.tokens_in, 8 * (0..100).sum::<u64>());
    assert!((sum.cost_usd - total.cost_usd).abs() < 1e-12);
    assert!((total.cost_usd - PriceTable::new(1.0, 3.0).cost(total.tokens_in, total.tokens_out)).abs() < 1e-9);
    gw.reset();
    assert!(gw.usage_ledger().is_empty());
}

#[test]
fn environment_configuration() {
    // The only test in this binary that touches the environment.
    let clear = || {
        for k in [ENV_MODE, ENV_FIXTURES, ENV_BASE_URL, ENV_MODEL, ENV_API_KEY, ENV_PRICE_IN, ENV_PRICE_OUT] {
            std::env::remove_var(k);
        }
    };
    clear();
    assert_eq!(Gateway::from_env().unwrap().mode(), GatewayMode::Stub);

    std::env::set_var(ENV_MODE, "real");
    let err = Gateway::from_env().unwrap_err();
    assert!(err.to_string().contains(ENV_BASE_URL), "{err}");
    std::env::set_var(ENV_BASE_URL, "http://127.0.0.1:9");
    std::env::set_var(ENV_MODEL, "m");
    assert_eq!(Gateway::from_env().unwrap().mode(), GatewayMode::Real);

    std::env::set_var(ENV_MODE, "sometimes");
    assert!(Gateway::from_env().is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fx.jsonl");
    std::fs::write(&path, "{\"tag\":\"judge\",\"prompt_hash\":\"*\",\"response\":\"CORRECT\"}\n").unwrap();
    std::env::set_var(ENV_MODE, "stub-strict");
    std::env::set_var(ENV_FIXTURES, &path);
    std::env::set_var(ENV_PRICE_IN, "0.25");
    std::env::set_var(ENV_PRICE_OUT, "2");
    let gw = Gateway::from_env().unwrap();
    assert_eq!(gw.mode(), GatewayMode::StubStrict);
    assert_eq!(gw.prices(), PriceTable::new(0.25, 2.0));
    assert_eq!(gw.complete("q", &CompletionParams::tagged("judge")).unwrap().0, "CORRECT");

    std::env::set_var(ENV_PRICE_IN, "-1");
    assert!(Gateway::from_env().is_err());
    std::env::set_var(ENV_PRICE_IN, "0");
    std::fs::write(&path, "not json\n").unwrap();
    let err = Gateway::from_env().unwrap_err();
    assert!(err.to_string().contains("fx.jsonl"), "{err}");
    clear();
}

/// Loopback server answering each connection with the next canned
/// `(status, body)`. Returns its base URL and the request bodies it saw.
fn mock_server(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in responses {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut req = vec![0; len];
            let _ = reader.read_exact(&mut req);
            log.lock().unwrap().push(String::from_utf8_lossy(&req).into_owned());
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    (url, seen)
}

fn quick(url: &str) -> HttpConfig {
    let mut c = HttpConfig::new(url, Some("k".into()), "test-model");
    c.backoff_base = Duration::from_millis(1);
    c.timeout = Duration::from_secs(5);
    c
}

const OK_BODY: &str =
    r#"{"choices":[{"message":{"content":"hello"}}],"usage":{"prompt_tokens":12,"completion_tokens":3}}"#;

#[test]
fn real_mode_retries_then_reads_usage() {
    let (url, seen) = mock_server(vec![(503, "busy".into()), (429, "slow down".into()), (200, OK_BODY.into())]);
    let before = network_calls();
    let gw = Gateway::real(quick(&url)).with_prices(PriceTable::new(1.0, 1.0));
    let (text, usage) = gw.complete("hi there", &CompletionParams::tagged("judge")).unwrap();
    assert_eq!(text, "hello");
    assert_eq!((usage.tokens_in, usage.tokens_out), (12, 3));
    assert!((usage.cost_usd - 15e-6).abs() < 1e-15);
    assert!(network_calls() - before >= 3);
    let bodies = seen.lock().unwrap();
    assert_eq!(bodies.len(), 3);
    assert!(bodies[2].contains("\"test-model\"") && bodies[2].contains("hi there"));
    assert_eq!(gw.usage_ledger()["judge"].tokens(), 15);
}

#[test]
fn real_mode_gives_up_with_the_status() {
    let (url, _) = mock_server(vec![(500, "a".into()), (500, "b".into()), (502, "c".into()), (500, "d".into())]);
    let err = Gateway::real(quick(&url)).complete("p", &CompletionParams::tagged("design")).unwrap_err();
    match err {
        GatewayError::RetriesExhausted { attempts, status, .. } => assert_eq!((attempts, status), (4, Some(500))),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn real_mode_does_not_retry_client_errors() {
    let (url, seen) = mock_server(vec![(400, "bad request".into()), (200, OK_BODY.into())]);
    let err = Gateway::real(quick(&url)).complete("p", &CompletionParams::tagged("design")).unwrap_err();
    assert!(matches!(err, GatewayError::Rejected { status: 400, .. }), "{err}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}
