//! The HTTP text-generation client against a local stub server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use mapstory::story::{
    generate_story, HttpTextGenerator, LlmBackend, StoryRequest, StorySource, TextGenClientConfig,
    TextGenError, TextGenerator,
};
use mapstory::taxonomy::{CaptionCategory, KeywordCaption};
use mapstory::tree::KeywordBundle;

#[derive(Clone, Copy)]
enum Behaviour {
    /// Answer with the prompt as the generated text.
    Echo,
    /// Never answer within the client timeout.
    Stall,
    /// HTTP 500.
    Fail,
}

struct Captured {
    headers: String,
    body: String,
}

struct Stub {
    url: String,
    requests: Arc<AtomicUsize>,
    captured: Arc<Mutex<Vec<Captured>>>,
}

fn read_request(stream: &mut std::net::TcpStream) -> Option<Captured> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut headers = String::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        if line == "\r\n" {
            break;
        }
        headers.push_str(&line);
    }
    let len = headers
        .lines()
        .find_map(|l| {
            l.to_ascii_lowercase()
                .strip_prefix("content-length:")
                .map(|v| v.trim().parse::<usize>().unwrap())
        })
        .unwrap_or(0);
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).ok()?;
    Some(Captured {
        headers,
        body: String::from_utf8(body).unwrap(),
    })
}

fn spawn_stub(behaviour: Behaviour) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!(
        "http://{}/v1/chat/completions",
        listener.local_addr().unwrap()
    );
    let requests = Arc::new(AtomicUsize::new(0));
    let captured = Arc::new(Mutex::new(Vec::new()));
    let (r, c) = (requests.clone(), captured.clone());
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let (r, c) = (r.clone(), c.clone());
            std::thread::spawn(move || {
                let Some(req) = read_request(&mut stream) else {
                    return;
                };
                r.fetch_add(1, Ordering::SeqCst);
                let reply = match behaviour {
                    Behaviour::Echo => {
                        let v: serde_json::Value = serde_json::from_str(&req.body).unwrap();
                        let prompt = v["messages"][0]["content"].clone();
                        let body = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": prompt}}]}).to_string();
                        format!("HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len())
                    }
                    Behaviour::Stall => {
                        std::thread::sleep(Duration::from_secs(3));
                        String::new()
                    }
                    Behaviour::Fail => "HTTP/1.1 500 Internal Server Error\r\nContent-Length: 0\r\nConnection: close\r\n\r\n".to_string(),
                };
                c.lock().unwrap().push(req);
                let _ = stream.write_all(reply.as_bytes());
            });
        }
    });
    Stub {
        url,
        requests,
        captured,
    }
}

fn config(stub: &Stub, key_var: &str) -> TextGenClientConfig {
    TextGenClientConfig {
        endpoint: stub.url.clone(),
        api_key_env_var: key_var.into(),
        timeout_s: 0.3,
        backoff_base_s: 0.0,
        ..TextGenClientConfig::default()
    }
}

fn backend(cfg: TextGenClientConfig) -> LlmBackend {
    let retry = cfg.retry_policy();
    LlmBackend::new(Arc::new(HttpTextGenerator::new(cfg).unwrap()), retry)
}

fn kc(category: CaptionCategory, label: &str) -> KeywordCaption {
    KeywordCaption {
        category,
        label: label.into(),
        confidence: 0.9,
    }
}

fn bundle() -> KeywordBundle {
    KeywordBundle {
        map_type: kc(CaptionCategory::MapType, "pictorial map"),
        children: vec![
            kc(CaptionCategory::LocationPict, "world"),
            kc(CaptionCategory::Topic, "flight network"),
        ],
        root_scores: vec![],
    }
}

#[test]
fn echo_round_trip_uses_llm_text_and_bearer_key() {
    let stub = spawn_stub(Behaviour::Echo);
    std::env::set_var("MAPSTORY_TEST_KEY_ECHO", "sk-test-123");
    let llm = backend(config(&stub, "MAPSTORY_TEST_KEY_ECHO"));
    let story = generate_story(&StoryRequest::all_aspects(bundle()), Some(&llm));
    assert_eq!(story.source, StorySource::Llm);
    assert_eq!(story.narrative, story.prompt);
    assert_eq!(stub.requests.load(Ordering::SeqCst), 1);
    let captured = stub.captured.lock().unwrap();
    let body: serde_json::Value = serde_json::from_str(&captured[0].body).unwrap();
    assert_eq!(body["model"], "gpt-3.5-turbo");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["content"], story.prompt.as_str());
    assert!(captured[0]
        .headers
        .to_ascii_lowercase()
        .contains("authorization: bearer sk-test-123"));
}

#[test]
fn missing_key_sends_no_authorization() {
    let stub = spawn_stub(Behaviour::Echo);
    let llm = backend(config(&stub, "MAPSTORY_TEST_KEY_UNSET_0451"));
    assert!(llm.generate("hi").is_ok());
    assert!(!stub.captured.lock().unwrap()[0]
        .headers
        .to_ascii_lowercase()
        .contains("authorization"));
}

#[test]
fn timeout_retries_then_falls_back() {
    let stub = spawn_stub(Behaviour::Stall);
    let cfg = config(&stub, "MAPSTORY_TEST_KEY_UNSET_0451");
    let gen = HttpTextGenerator::new(cfg.clone()).unwrap();
    assert!(matches!(gen.generate_once("x"), Err(TextGenError::Timeout)));
    let before = stub.requests.load(Ordering::SeqCst);
    let story = generate_story(&StoryRequest::all_aspects(bundle()), Some(&backend(cfg)));
    assert_eq!(story.source, StorySource::Fallback);
    assert!(!story.prompt.is_empty());
    // Requests are counted once their body has arrived; give the last one a moment.
    std::thread::sleep(Duration::from_millis(200));
    assert_eq!(stub.requests.load(Ordering::SeqCst) - before, 3);
}

#[test]
fn server_error_is_retried() {
    let stub = spawn_stub(Behaviour::Fail);
    let cfg = TextGenClientConfig {
        max_retries: 1,
        ..config(&stub, "MAPSTORY_TEST_KEY_UNSET_0451")
    };
    let err = backend(cfg).generate("x").unwrap_err();
    assert!(matches!(err, TextGenError::Status(500)), "{err}");
    assert_eq!(stub.requests.load(Ordering::SeqCst), 2);
}

#[test]
fn service_config_wires_llm_backend() {
    let stub = spawn_stub(Behaviour::Echo);
    let fixtures = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures");
    let text = format!(
        "vocab_config = \"vocab.toml\"\ntree_config = \"tree.toml\"\nbackend = \"mock\"\n\n[llm]\nendpoint = \"{}\"\ntimeout_s = 2.0\n",
        stub.url
    );
    let cfg = mapstory::ServiceConfig::from_toml_str(&text, &fixtures).unwrap();
    let pipeline = cfg.build_pipeline().unwrap();
    let img = image::DynamicImage::new_rgb8(4, 4);
    let resp = pipeline.story(&img, &mapstory::Aspect::ALL).unwrap();
    assert_eq!(resp.source, StorySource::Llm);
    assert_eq!(resp.narrative, resp.prompt);
}

#[test]
fn secrets_are_not_read_from_config() {
    let text = "endpoint = \"http://127.0.0.1:1/\"\napi_key = \"sk-inline\"\n";
    assert!(toml::from_str::<TextGenClientConfig>(text).is_err());
}
