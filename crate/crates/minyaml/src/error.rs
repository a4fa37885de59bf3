use thiserror::Error;

/// Errors raised while parsing a document.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, col {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },

    /// A tagged node was found in safe mode. This is the mitigation firing.
    #[error("forbidden tag {tag:?} at line {line}, col {col}")]
    ForbiddenTag { tag: String, line: usize, col: usize },

    /// Unsafe mode resolved a gadget tag whose name is not registered.
    #[error("unknown gadget {name:?}")]
    UnknownGadget { name: String },

    /// The registered gadget rejected its arguments.
    #[error("gadget {name:?} failed: {msg}")]
    Gadget { name: String, msg: String },
}

impl ParseError {
    pub fn syntax(line: usize, col: usize, msg: impl Into<String>) -> Self {
        ParseError::Syntax {
            line,
            col,
            msg: msg.into(),
        }
    }
}

/// Errors raised when filling a typed message from a parsed value.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MessageError {
    /// The value was not a mapping (or a sequence of mappings).
    #[error("value does not contain a dictionary")]
    NotADictionary,

    #[error("type mismatch for field {field:?}")]
    TypeMismatch { field: String },

    #[error("unknown field {field:?}")]
    UnknownField { field: String },
}
