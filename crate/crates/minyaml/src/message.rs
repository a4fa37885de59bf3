//! Filling typed messages from parsed values.

use crate::error::MessageError;
use crate::value::{Node, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldType {
    Int,
    Float,
    Bool,
    Str,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
}

impl FieldValue {
    fn zero(ty: FieldType) -> FieldValue {
        match ty {
            FieldType::Int => FieldValue::Int(0),
            FieldType::Float => FieldValue::Float(0.0),
            FieldType::Bool => FieldValue::Bool(false),
            FieldType::Str => FieldValue::Str(String::new()),
        }
    }
}

/// Field layout of a message type.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageSchema {
    pub type_name: String,
    pub fields: Vec<(String, FieldType)>,
}

impl MessageSchema {
    pub fn new(type_name: impl Into<String>, fields: Vec<(&str, FieldType)>) -> Self {
        MessageSchema {
            type_name: type_name.into(),
            fields: fields
                .into_iter()
                .map(|(n, t)| (n.to_string(), t))
                .collect(),
        }
    }
}

/// A typed message with every schema field populated.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub type_name: String,
    pub fields: Vec<(String, FieldValue)>,
}

fn coerce(ty: FieldType, value: &Node, field: &str) -> Result<FieldValue, MessageError> {
    let scalar = match value {
        Node::Scalar(s) => s,
        _ => {
            return Err(MessageError::TypeMismatch {
                field: field.to_string(),
            })
        }
    };
    match (ty, scalar) {
        (_, Scalar::Null) => Ok(FieldValue::zero(ty)),
        (FieldType::Int, Scalar::Int(v)) => Ok(FieldValue::Int(*v)),
        (FieldType::Float, Scalar::Float(v)) => Ok(FieldValue::Float(*v)),
        (FieldType::Float, Scalar::Int(v)) => Ok(FieldValue::Float(*v as f64)),
        (FieldType::Bool, Scalar::Bool(v)) => Ok(FieldValue::Bool(*v)),
        (FieldType::Str, Scalar::Str(v)) => Ok(FieldValue::Str(v.clone())),
        _ => Err(MessageError::TypeMismatch {
            field: field.to_string(),
        }),
    }
}

/// Fills one message from a mapping. Unknown fields are rejected; missing
/// fields default to zero values.
pub fn fill_message(schema: &MessageSchema, value: &Node) -> Result<Message, MessageError> {
    let entries = match value {
        Node::Mapping(entries) => entries,
        _ => return Err(MessageError::NotADictionary),
    };
    for (key, _) in entries {
        let name = match key {
            Scalar::Str(s) => s.clone(),
            other => other.to_string(),
        };
        if !schema.fields.iter().any(|(f, _)| *f == name) {
            return Err(MessageError::UnknownField { field: name });
        }
    }
    let mut fields = Vec::with_capacity(schema.fields.len());
    for (name, ty) in &schema.fields {
        let value = entries.iter().find_map(|(k, v)| match k {
            Scalar::Str(s) if s == name => Some(v),
            _ => None,
        });
        let fv = match value {
            Some(v) => coerce(*ty, v, name)?,
            None => FieldValue::zero(*ty),
        };
        fields.push((name.clone(), fv));
    }
    Ok(Message {
        type_name: schema.type_name.clone(),
        fields,
    })
}

/// Fills one or more messages: a mapping yields one, a sequence must contain
/// only mappings. Anything else does not contain a dictionary.
pub fn fill_message_args(
    schema: &MessageSchema,
    value: &Node,
) -> Result<Vec<Message>, MessageError> {
    match value {
        Node::Mapping(_) => Ok(vec![fill_message(schema, value)?]),
        Node::Sequence(items) => items.iter().map(|item| fill_message(schema, item)).collect(),
        _ => Err(MessageError::NotADictionary),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_safe;

    fn schema() -> MessageSchema {
        MessageSchema::new("SetModeGoal", vec![("mode", FieldType::Int)])
    }

    #[test]
    fn direct_fill() {
        let value = parse_safe("mode: 2").unwrap();
        let msg = fill_message(&schema(), &value).unwrap();
        assert_eq!(msg.fields, vec![("mode".to_string(), FieldValue::Int(2))]);
    }

    #[test]
    fn scalar_is_not_a_dictionary() {
        let value = parse_safe("\"5\"").unwrap();
        assert_eq!(
            fill_message(&schema(), &value),
            Err(MessageError::NotADictionary)
        );
        assert_eq!(
            fill_message_args(&schema(), &parse_safe("5").unwrap()),
            Err(MessageError::NotADictionary)
        );
    }

    #[test]
    fn type_mismatch() {
        let value = parse_safe("mode: x").unwrap();
        assert_eq!(
            fill_message(&schema(), &value),
            Err(MessageError::TypeMismatch {
                field: "mode".into()
            })
        );
    }

    #[test]
    fn unknown_field_rejected() {
        let value = parse_safe("bogus: 1").unwrap();
        assert_eq!(
            fill_message(&schema(), &value),
            Err(MessageError::UnknownField {
                field: "bogus".into()
            })
        );
    }

    #[test]
    fn missing_fields_zeroed() {
        let schema = MessageSchema::new(
            "M",
            vec![
                ("a", FieldType::Int),
                ("b", FieldType::Str),
                ("c", FieldType::Bool),
            ],
        );
        let value = parse_safe("a: 7").unwrap();
        let msg = fill_message(&schema, &value).unwrap();
        assert_eq!(
            msg.fields,
            vec![
                ("a".to_string(), FieldValue::Int(7)),
                ("b".to_string(), FieldValue::Str(String::new())),
                ("c".to_string(), FieldValue::Bool(false)),
            ]
        );
    }

    #[test]
    fn sequence_of_mappings() {
        let value = parse_safe("- mode: 1\n- mode: 2").unwrap();
        let msgs = fill_message_args(&schema(), &value).unwrap();
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[1].fields[0].1, FieldValue::Int(2));
    }
}
