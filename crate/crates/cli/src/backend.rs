//! Translator and judge backends selectable from the command line.

use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::Args;
use serde_json::{json, Value};

use schemaloc::ports::{
    DictionaryTranslator, IdentityTranslator, JudgePort, JudgeRequest, PortError, SchemaPackage, TextRequest,
    TranslatorPort,
};

#[derive(Debug, Clone, Args)]
pub struct TranslatorArgs {
    /// JSON dictionary with `db_ids`, `identifiers` and `texts`.
    #[arg(long, conflicts_with_all = ["endpoint", "identity"])]
    pub dictionary: Option<PathBuf>,
    /// HTTP endpoint of the translation service.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Environment variable holding the service's bearer token.
    #[arg(long, requires = "endpoint")]
    pub api_key_env: Option<String>,
    /// Keep every identifier and text unchanged (dry run).
    #[arg(long, conflicts_with = "endpoint")]
    pub identity: bool,
    /// Request timeout, in seconds.
    #[arg(long, default_value_t = 120)]
    pub request_timeout: u64,
}

impl TranslatorArgs {
    pub fn build(&self) -> anyhow::Result<Box<dyn TranslatorPort>> {
        if let Some(path) = &self.dictionary {
            return Ok(Box::new(DictionaryTranslator::from_file(path)?));
        }
        if let Some(url) = &self.endpoint {
            let key = read_key(self.api_key_env.as_deref())?;
            return Ok(Box::new(HttpService::new(url, key, self.request_timeout)));
        }
        if self.identity {
            return Ok(Box::new(IdentityTranslator));
        }
        bail!("no translator: pass --dictionary, --endpoint or --identity")
    }
}

#[derive(Debug, Clone, Args)]
pub struct JudgeArgs {
    /// HTTP endpoint of the alignment judge. Without it no judge runs.
    #[arg(long)]
    pub judge_endpoint: Option<String>,
    #[arg(long, requires = "judge_endpoint")]
    pub judge_key_env: Option<String>,
}

impl JudgeArgs {
    pub fn build(&self, timeout: u64) -> anyhow::Result<Option<Box<dyn JudgePort>>> {
        match &self.judge_endpoint {
            Some(url) => {
                let key = read_key(self.judge_key_env.as_deref())?;
                Ok(Some(Box::new(HttpService::new(url, key, timeout))))
            }
            None => Ok(None),
        }
    }
}

fn read_key(var: Option<&str>) -> anyhow::Result<Option<String>> {
    match var {
        Some(var) => Ok(Some(
            std::env::var(var).with_context(|| format!("environment variable {var} is not set"))?,
        )),
        None => Ok(None),
    }
}

/// Posts `{"task": .., "input": ..}` and returns the response body as the
/// raw reply.
pub struct HttpService {
    agent: ureq::Agent,
    url: String,
    key: Option<String>,
}

impl HttpService {
    pub fn new(url: &str, key: Option<String>, timeout_secs: u64) -> Self {
        Self {
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(timeout_secs))
                .build(),
            url: url.to_string(),
            key,
        }
    }

    fn call(&self, task: &str, input: Value) -> Result<String, PortError> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = req
            .send_json(json!({ "task": task, "input": input }))
            .map_err(|e| PortError::Unavailable(e.to_string()))?;
        resp.into_string().map_err(|e| PortError::Unavailable(e.to_string()))
    }
}

impl TranslatorPort for HttpService {
    fn map_schema(&self, package: &SchemaPackage) -> Result<String, PortError> {
        self.call("map_schema", serde_json::to_value(package).expect("serializable"))
    }

    fn translate(&self, request: &TextRequest) -> Result<String, PortError> {
        self.call("translate", serde_json::to_value(request).expect("serializable"))
    }
}

impl JudgePort for HttpService {
    fn judge(&self, request: &JudgeRequest) -> Result<String, PortError> {
        self.call("judge", serde_json::to_value(request).expect("serializable"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serves one request, echoing the task and the authorization header.
    fn one_shot() -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line[14..].trim().to_string();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let reply = r#"{"question_tr":"soru","evidence_tr":""}"#;
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
            format!("{auth} {}", String::from_utf8(body).unwrap())
        });
        (url, handle)
    }

    #[test]
    fn http_translate_round_trip() {
        let (url, handle) = one_shot();
        let svc = HttpService::new(&url, Some("k1".into()), 5);
        let req = TextRequest {
            question_en: "question".into(),
            evidence_std: String::new(),
            sql_en: None,
        };
        let raw = svc.translate(&req).unwrap();
        assert_eq!(schemaloc::nl::parse_text_reply(&raw).unwrap().0, "soru");
        let seen = handle.join().unwrap();
        assert!(seen.starts_with("Bearer k1 "));
        let body: Value = serde_json::from_str(seen.trim_start_matches("Bearer k1 ")).unwrap();
        assert_eq!(body["task"], "translate");
        assert_eq!(body["input"]["question_en"], "question");
    }

    #[test]
    fn unreachable_service_is_unavailable() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        drop(listener);
        let svc = HttpService::new(&url, None, 2);
        assert!(matches!(
            svc.judge(&JudgeRequest {
                question_tr: String::new(),
                evidence_tr: String::new(),
                sql_tr: String::new(),
                sql_en: None,
            }),
            Err(PortError::Unavailable(_))
        ));
    }

    #[test]
    fn missing_key_variable_is_reported() {
        let args = TranslatorArgs {
            dictionary: None,
            endpoint: Some("http://localhost:1/".into()),
            api_key_env: Some("SCHEMALOC_TEST_UNSET_KEY".into()),
            identity: false,
            request_timeout: 1,
        };
        let err = args.build().err().unwrap().to_string();
        assert!(err.contains("SCHEMALOC_TEST_UNSET_KEY"));
    }
}
