use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use crate::schema::FieldKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A rule violation found while validating a config, document or filter.
///
/// Violations are data, not failures: validators return every violation they
/// find and leave it to the caller to decide whether to abort.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Violation {
    EmptyName(String),
    InvalidChannelName(String),
    InvalidFieldName(String),
    NoChannels,
    DuplicateChannel(String),
    DuplicateField(String),
    NameCollision(String),

    EmptyDocId,
    UnknownChannel(String),
    UnknownField(String),
    TypeMismatch(String, FieldKind),
    DuplicateDocId(String),
    Malformed(String),

    UnfilterableField(String),
    RangeOnNonOrdered(String),
    EmptyComposite(String),
    InvalidFilterValue(String, String),

    InvalidChunking(String),
    InvalidEmbedder(String),
    InvalidIndex(String),
    InvalidRouter(String),
    InvalidFusion(String),
    DanglingRef(String),
    WrongRefKind(String),
    CrossDatasetRef(String),
    DuplicateVectorSetName(String),
    UnknownActiveVectorSet(String),
    VectorSetChannelMissing(String),
    LexicalChannelMissing(String),

    InvalidRequest(String),
}

impl Violation {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        use Violation::*;
        match self {
            EmptyName(_) => "EmptyName",
            InvalidChannelName(_) => "InvalidChannelName",
            InvalidFieldName(_) => "InvalidFieldName",
            NoChannels => "NoChannels",
            DuplicateChannel(_) => "DuplicateChannel",
            DuplicateField(_) => "DuplicateField",
            NameCollision(_) => "NameCollision",
            EmptyDocId => "EmptyDocId",
            UnknownChannel(_) => "UnknownChannel",
            UnknownField(_) => "UnknownField",
            TypeMismatch(..) => "TypeMismatch",
            DuplicateDocId(_) => "DuplicateDocId",
            Malformed(_) => "Malformed",
            UnfilterableField(_) => "UnfilterableField",
            RangeOnNonOrdered(_) => "RangeOnNonOrdered",
            EmptyComposite(_) => "EmptyComposite",
            InvalidFilterValue(..) => "InvalidFilterValue",
            InvalidChunking(_) => "InvalidChunking",
            InvalidEmbedder(_) => "InvalidEmbedder",
            InvalidIndex(_) => "InvalidIndex",
            InvalidRouter(_) => "InvalidRouter",
            InvalidFusion(_) => "InvalidFusion",
            DanglingRef(_) => "DanglingRef",
            WrongRefKind(_) => "WrongRefKind",
            CrossDatasetRef(_) => "CrossDatasetRef",
            DuplicateVectorSetName(_) => "DuplicateVectorSetName",
            UnknownActiveVectorSet(_) => "UnknownActiveVectorSet",
            VectorSetChannelMissing(_) => "VectorSetChannelMissing",
            LexicalChannelMissing(_) => "LexicalChannelMissing",
            InvalidRequest(_) => "InvalidRequest",
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        use Violation::*;
        match self {
            EmptyName(what) => write!(f, "{what} name must be nonempty"),
            InvalidChannelName(n) => write!(f, "channel name {n:?} must match [a-z][a-z0-9_]*"),
            InvalidFieldName(n) => write!(f, "metadata field name {n:?} must match [a-z][a-z0-9_]*"),
            NoChannels => write!(f, "dataset must declare at least one channel"),
            DuplicateChannel(n) => write!(f, "channel {n:?} declared more than once"),
            DuplicateField(n) => write!(f, "metadata field {n:?} declared more than once"),
            NameCollision(n) => write!(f, "{n:?} is both a channel and a metadata field"),
            EmptyDocId => write!(f, "doc_id must be nonempty"),
            UnknownChannel(n) => write!(f, "channel {n:?} is not declared in the dataset"),
            UnknownField(n) => write!(f, "metadata field {n:?} is not declared in the dataset"),
            TypeMismatch(n, kind) => write!(f, "value of {n:?} does not match kind {}", kind.as_str()),
            DuplicateDocId(id) => write!(f, "doc_id {id:?} already ingested"),
            Malformed(msg) => write!(f, "malformed record: {msg}"),
            UnfilterableField(n) => write!(f, "field {n:?} is not filterable"),
            RangeOnNonOrdered(n) => write!(f, "range filter on non-ordered field {n:?}"),
            EmptyComposite(op) => write!(f, "{op} needs at least one child"),
            InvalidFilterValue(n, msg) => write!(f, "bad filter value for {n:?}: {msg}"),
            InvalidChunking(msg) => write!(f, "invalid chunking: {msg}"),
            InvalidEmbedder(msg) => write!(f, "invalid embedder: {msg}"),
            InvalidIndex(msg) => write!(f, "invalid vector index: {msg}"),
            InvalidRouter(msg) => write!(f, "invalid router: {msg}"),
            InvalidFusion(msg) => write!(f, "invalid fusion: {msg}"),
            DanglingRef(h) => write!(f, "reference {h} does not resolve"),
            WrongRefKind(h) => write!(f, "reference {h} points at the wrong config kind"),
            CrossDatasetRef(vs) => write!(f, "vectorset {vs} references a different dataset than the app"),
            DuplicateVectorSetName(n) => write!(f, "vectorset name {n:?} appears twice in the app"),
            UnknownActiveVectorSet(n) => write!(f, "active vectorset {n:?} is not one of the app's vectorsets"),
            VectorSetChannelMissing(n) => write!(f, "vectorset channel {n:?} is not in the dataset"),
            LexicalChannelMissing(n) => write!(f, "lexical channel {n:?} is not in the dataset"),
            InvalidRequest(msg) => write!(f, "invalid request: {msg}"),
        }
    }
}

impl Serialize for Violation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("Violation", 2)?;
        s.serialize_field("code", self.code())?;
        s.serialize_field("message", &self.to_string())?;
        s.end()
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("validation failed with {} violation(s)", .0.len())]
    Violations(Vec<Violation>),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("requested {clusters} clusters but only {points} vectors are available")]
    MoreClustersThanPoints { clusters: usize, points: usize },
    #[error("embedder failure: {0}")]
    Embedder(String),
    #[error("non-finite float in config at {0}")]
    NonFiniteFloat(String),
    #[error("invalid config hash {0:?}")]
    InvalidHash(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("unknown vectorset {0:?}")]
    UnknownVectorSet(String),
    #[error("missing build input: {0}")]
    MissingInput(String),
    #[error("infeasible generator spec: {0}")]
    Infeasible(String),
    #[error("corrupt artifact: {0}")]
    Corrupt(String),
    #[error("engine failure under plan {plan}: {source}")]
    Engine {
        plan: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by bad input rather than by the runtime.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Violations(_) | Error::InvalidHash(_) | Error::NonFiniteFloat(_) => true,
            Error::Engine { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}
