//! The single chokepoint for language-model calls.
//!
//! Every LLM-dependent strategy calls [`Gateway::complete`] with a purpose
//! tag. The gateway answers from a real chat-completion endpoint or from a
//! deterministic stub, and accumulates per-tag token and cost totals in a
//! ledger. Usage that does not come from a completion (the simulated agent's
//! own token spend) is charged with [`Gateway::record`] so that a candidate's
//! full cost lives in one place.

mod http;
mod stub;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpConfig;
pub use stub::{FixtureRecord, FixtureTable};

use crate::hash::stable_hex;

pub const ENV_BASE_URL: &str = "EVOLAB_LLM_BASE_URL";
pub const ENV_API_KEY: &str = "EVOLAB_LLM_API_KEY";
pub const ENV_MODEL: &str = "EVOLAB_LLM_MODEL";
pub const ENV_MODE: &str = "EVOLAB_LLM_MODE";
pub const ENV_FIXTURES: &str = "EVOLAB_LLM_FIXTURES";
/// USD per million input tokens; unset means zero.
pub const ENV_PRICE_IN: &str = "EVOLAB_LLM_PRICE_IN";
/// USD per million output tokens; unset means zero.
pub const ENV_PRICE_OUT: &str = "EVOLAB_LLM_PRICE_OUT";

static NETWORK_CALLS: AtomicU64 = AtomicU64::new(0);

/// Number of HTTP requests issued by real-mode gateways in this process.
pub fn network_calls() -> u64 {
    NETWORK_CALLS.load(Ordering::SeqCst)
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("gateway gave up after {attempts} attempts (status {}): {detail}", status.map_or("none".to_string(), |s| s.to_string()))]
    RetriesExhausted { attempts: u32, status: Option<u16>, detail: String },
    #[error("request rejected with status {status}: {detail}")]
    Rejected { status: u16, detail: String },
    #[error("no stub fixture for tag {tag:?} (prompt hash {prompt_hash})")]
    FixtureMiss { tag: String, prompt_hash: String },
    #[error("malformed endpoint response: {0}")]
    BadResponse(String),
    #[error("gateway configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GatewayMode {
    Real,
    Stub,
    StubStrict,
}

impl std::str::FromStr for GatewayMode {
    type Err = GatewayError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(GatewayMode::Real),
            "stub" => Ok(GatewayMode::Stub),
            "stub-strict" => Ok(GatewayMode::StubStrict),
            other => Err(GatewayError::Config(format!("unknown mode {other:?} (real|stub|stub-strict)"))),
        }
    }
}

/// Prices in USD per million tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub input_per_million: f64,
    pub output_per_million: f64,
}

impl PriceTable {
    pub fn new(input_per_million: f64, output_per_million: f64) -> Self {
        PriceTable { input_per_million, output_per_million }
    }

    pub fn cost(&self, tokens_in: u64, tokens_out: u64) -> f64 {
        tokens_in as f64 * self.input_per_million / 1e6 + tokens_out as f64 * self.output_per_million / 1e6
    }

    pub fn is_zero(&self) -> bool {
        self.input_per_million == 0.0 && self.output_per_million == 0.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CompletionUsage {
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub cost_usd: f64,
    pub latency: f64,
}

impl CompletionUsage {
    pub fn add(&mut self, other: &CompletionUsage) {
        self.tokens_in += other.tokens_in;
        self.tokens_out += other.tokens_out;
        self.cost_usd += other.cost_usd;
        self.latency += other.latency;
    }

    pub fn tokens(&self) -> u64 {
        self.tokens_in + self.tokens_out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Purpose label used for fixture lookup and cost attribution.
    pub tag: String,
}

impl CompletionParams {
    pub fn tagged(tag: impl Into<String>) -> Self {
        CompletionParams { temperature: 0.0, max_tokens: 1024, tag: tag.into() }
    }
}

#[derive(Debug)]
enum Backend {
    Stub { fixtures: FixtureTable, strict: bool },
    Real(http::HttpClient),
}

/// Cheap to clone; clones share the backend and the ledger.
#[derive(Debug, Clone)]
pub struct Gateway {
    backend: Arc<Backend>,
    prices: PriceTable,
    ledger: Arc<Mutex<BTreeMap<String, CompletionUsage>>>,
}

/// Stub token estimate: roughly four characters per token.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

impl Gateway {
    fn with_backend(backend: Backend, prices: PriceTable) -> Self {
        Gateway { backend: Arc::new(backend), prices, ledger: Arc::default() }
    }

    /// Stub gateway: fixtures first, then the built-in deterministic responder.
    pub fn stub() -> Self {
        Self::stub_with(FixtureTable::default(), false)
    }

    /// Stub gateway that errors on any prompt without a fixture.
    pub fn stub_strict(fixtures: FixtureTable) -> Self {
        Self::stub_with(fixtures, true)
    }

    pub fn stub_with(fixtures: FixtureTable, strict: bool) -> Self {
        Self::with_backend(Backend::Stub { fixtures, strict }, PriceTable::default())
    }

    pub fn real(config: HttpConfig) -> Self {
        Self::with_backend(Backend::Real(http::HttpClient::new(config)), PriceTable::default())
    }

    pub fn with_prices(mut self, prices: PriceTable) -> Self {
        self.prices = prices;
        self
    }

    /// Configure from `EVOLAB_LLM_*` variables. Mode defaults to `stub`;
    /// `EVOLAB_LLM_FIXTURES` optionally names a fixture file.
    pub fn from_env() -> Result<Self, GatewayError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let mode: GatewayMode = var(ENV_MODE).as_deref().unwrap_or("stub").parse()?;
        let price = |k: &str| -> Result<f64, GatewayError> {
            match var(k) {
                None => Ok(0.0),
                Some(v) => v
                    .parse::<f64>()
                    .ok()
                    .filter(|p| p.is_finite() && *p >= 0.0)
                    .ok_or_else(|| GatewayError::Config(format!("{k} must be a non-negative number, got {v:?}"))),
            }
        };
        let prices = PriceTable::new(price(ENV_PRICE_IN)?, price(ENV_PRICE_OUT)?);
        Ok(Self::from_env_mode(mode, &var)?.with_prices(prices))
    }

    fn from_env_mode(mode: GatewayMode, var: &dyn Fn(&str) -> Option<String>) -> Result<Self, GatewayError> {
        match mode {
            GatewayMode::Real => {
                let base_url = var(ENV_BASE_URL)
                    .ok_or_else(|| GatewayError::Config(format!("{ENV_BASE_URL} is required in real mode")))?;
                let model = var(ENV_MODEL)
                    .ok_or_else(|| GatewayError::Config(format!("{ENV_MODEL} is required in real mode")))?;
                Ok(Self::real(HttpConfig::new(base_url, var(ENV_API_KEY), model)))
            }
            GatewayMode::Stub | GatewayMode::StubStrict => {
                let fixtures = match var(ENV_FIXTURES) {
                    Some(path) => FixtureTable::load(Path::new(&path))?,
                    None => FixtureTable::default(),
                };
                Ok(Self::stub_with(fixtures, mode == GatewayMode::StubStrict))
            }
        }
    }

    pub fn mode(&self) -> GatewayMode {
        match &*self.backend {
            Backend::Real(_) => GatewayMode::Real,
            Backend::Stub { strict: true, .. } => GatewayMode::StubStrict,
            Backend::Stub { strict: false, .. } => GatewayMode::Stub,
        }
    }

    pub fn prices(&self) -> PriceTable {
        self.prices
    }

    /// Same backend and prices, fresh empty ledger.
    pub fn scoped(&self) -> Self {
        Gateway { backend: Arc::clone(&self.backend), prices: self.prices, ledger: Arc::default() }
    }

    /// Whether a stub fixture covers this exact (tag, prompt).
    pub fn has_fixture(&self, tag: &str, prompt: &str) -> bool {
        match &*self.backend {
            Backend::Stub { fixtures, .. } => fixtures.lookup(tag, prompt).is_some(),
            Backend::Real(_) => false,
        }
    }

    pub fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<(String, CompletionUsage), GatewayError> {
        let (text, mut usage) = match &*self.backend {
            Backend::Stub { fixtures, strict } => {
                let text = match fixtures.lookup(&params.tag, prompt) {
                    Some(t) => t.to_string(),
                    None if *strict => {
                        return Err(GatewayError::FixtureMiss {
                            tag: params.tag.clone(),
                            prompt_hash: stable_hex(prompt),
                        })
                    }
                    None => stub::synthesize(&params.tag, prompt),
                };
                let usage = CompletionUsage {
                    tokens_in: estimate_tokens(prompt),
                    tokens_out: estimate_tokens(&text),
                    cost_usd: 0.0,
                    latency: 0.0,
                };
                (text, usage)
            }
            Backend::Real(client) => client.complete(prompt, params, &NETWORK_CALLS)?,
        };
        usage.cost_usd = self.prices.cost(usage.tokens_in, usage.tokens_out);
        self.charge(&params.tag, &usage);
        Ok((text, usage))
    }

    /// Charge externally metered usage to the ledger under `tag`.
    pub fn record(&self, tag: &str, tokens_in: u64, tokens_out: u64, latency: f64) -> CompletionUsage {
        let usage =
            CompletionUsage { tokens_in, tokens_out, cost_usd: self.prices.cost(tokens_in, tokens_out), latency };
        self.charge(tag, &usage);
        usage
    }

    fn charge(&self, tag: &str, usage: &CompletionUsage) {
        let mut ledger = self.ledger.lock().expect("ledger lock");
        ledger.entry(tag.to_string()).or_default().add(usage);
    }

    /// Cumulative usage per tag.
    pub fn usage_ledger(&self) -> BTreeMap<String, CompletionUsage> {
        self.ledger.lock().expect("ledger lock").clone()
    }

    /// Sum over all tags.
    pub fn total(&self) -> CompletionUsage {
        let mut total = CompletionUsage::default();
        for u in self.ledger.lock().expect("ledger lock").values() {
            total.add(u);
        }
        total
    }

    pub fn reset(&self) {
        self.ledger.lock().expect("ledger lock").clear();
    }

    /// The cost dimension of feedback: USD when prices are configured,
    /// otherwise the token count.
    pub fn cost_measure(&self, usage: &CompletionUsage) -> f64 {
        if self.prices.is_zero() {
            usage.tokens() as f64
        } else {
            usage.cost_usd
        }
    }

    /// [`Gateway::cost_measure`] of the whole ledger.
    pub fn spend(&self) -> f64 {
        self.cost_measure(&self.total())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn price_formula() {
        let p = PriceTable::new(0.25, 2.00);
        assert!((p.cost(1000, 500) - 0.00125).abs() < 1e-12);
        assert_eq!(PriceTable::default().cost(1000, 500), 0.0);
    }

    #[test]
    fn stub_fixture_lookup_is_deterministic() {
        let mut fx = FixtureTable::default();
        fx.insert("encode.insight", "some prompt", "- an insight");
        let gw = Gateway::stub_strict(fx);
        let p = CompletionParams::tagged("encode.insight");
        let (a, ua) = gw.complete("some prompt", &p).unwrap();
        let (b, ub) = gw.complete("some prompt", &p).unwrap();
        assert_eq!(a, "- an insight");
        assert_eq!((a, ua), (b, ub));
        assert_eq!(ua.tokens_in, estimate_tokens("some prompt"));
    }

    #[test]
    fn strict_miss_names_tag() {
        let gw = Gateway::stub_strict(FixtureTable::default());
        let err = gw.complete("x", &CompletionParams::tagged("judge")).unwrap_err();
        assert!(matches!(&err, GatewayError::FixtureMiss { tag, .. } if tag == "judge"));
        assert!(gw.usage_ledger().is_empty());
    }

    #[test]
    fn ledger_additivity_and_reset() {
        let gw = Gateway::stub().with_prices(PriceTable::new(0.25, 2.0));
        gw.complete("alpha beta", &CompletionParams::tagged("encode.summary")).unwrap();
        gw.complete("gamma", &CompletionParams::tagged("judge")).unwrap();
        gw.record("agent", 1000, 500, 0.0);
        let ledger = gw.usage_ledger();
        let mut sum = CompletionUsage::default();
        for u in ledger.values() {
            sum.add(u);
        }
        assert_eq!(sum, gw.total());
        assert!((ledger["agent"].cost_usd - 0.00125).abs() < 1e-12);
        assert!((gw.spend() - gw.total().cost_usd).abs() < 1e-15);
        gw.reset();
        assert_eq!(gw.total(), CompletionUsage::default());
    }

    #[test]
    fn scoped_ledgers_are_independent() {
        let gw = Gateway::stub();
        let child = gw.scoped();
        child.record("agent", 10, 0, 0.0);
        assert_eq!(gw.total().tokens(), 0);
        assert_eq!(child.spend(), 10.0);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("stub-strict".parse::<GatewayMode>().unwrap(), GatewayMode::StubStrict);
        assert!("other".parse::<GatewayMode>().is_err());
        assert_eq!(Gateway::stub().mode(), GatewayMode::Stub);
    }
}
