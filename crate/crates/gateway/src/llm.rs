//! Blocking HTTP client for the `external_llm` generator and agent path.
//!
//! Request: `POST <endpoint>` with `{"prompt": "..."}`. The reply body is
//! either JSON with a `completion` (or `text`) string field, or plain text.

use std::time::Duration;

use stagewise_core::pipeline::LlmClient;

pub struct HttpLlmClient {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpLlmClient {
    pub fn new(endpoint: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs(120))).build().into();
        HttpLlmClient { endpoint: endpoint.into(), agent }
    }
}

fn completion_of(body: &str) -> String {
    match serde_json::from_str::<serde_json::Value>(body) {
        Ok(v) => ["completion", "text"]
            .iter()
            .find_map(|k| v.get(k).and_then(|s| s.as_str()).map(str::to_string))
            .unwrap_or_else(|| body.to_string()),
        Err(_) => body.to_string(),
    }
}

impl LlmClient for HttpLlmClient {
    fn complete(&self, prompt: &str) -> Result<String, String> {
        let body = serde_json::json!({ "prompt": prompt }).to_string();
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("content-type", "application/json")
            .send(body.as_bytes())
            .map_err(|e| format!("{}: {e}", self.endpoint))?;
        let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(completion_of(&text))
    }
}

#[cfg(test)]
mod tests {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    use stagewise_core::pipeline::LlmClient;

    use super::{completion_of, HttpLlmClient};

    /// Answers one request with `reply` and hands back the request body.
    fn one_shot(status: &'static str, reply: &'static str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/complete", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let mut stream = stream;
            write!(stream, "HTTP/1.1 {status}\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}", reply.len())
                .unwrap();
            String::from_utf8(body).unwrap()
        });
        (url, handle)
    }

    #[test]
    fn posts_the_prompt_and_reads_the_completion() {
        let (url, server) = one_shot("200 OK", r#"{"completion":"Padua [D2]"}"#);
        let out = HttpLlmClient::new(url).complete("where?").unwrap();
        assert_eq!(out, "Padua [D2]");
        let sent: serde_json::Value = serde_json::from_str(&server.join().unwrap()).unwrap();
        assert_eq!(sent, serde_json::json!({"prompt": "where?"}));
    }

    #[test]
    fn server_errors_surface_as_failures() {
        let (url, server) = one_shot("503 Service Unavailable", "busy");
        assert!(HttpLlmClient::new(url).complete("x").is_err());
        server.join().unwrap();
    }

    #[test]
    fn reply_shapes() {
        assert_eq!(completion_of(r#"{"completion":"a [D1]"}"#), "a [D1]");
        assert_eq!(completion_of(r#"{"text":"b"}"#), "b");
        assert_eq!(completion_of("plain"), "plain");
        assert_eq!(completion_of(r#"{"other":1}"#), r#"{"other":1}"#);
    }
}
