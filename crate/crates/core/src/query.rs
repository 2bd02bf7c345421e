//! The conjunctive query subset used on federation origins: `select *
//! where` followed by parenthesized comparisons joined with AND. Exactly
//! the operators `=`, `>=` and `<=` are understood; anything else is a
//! syntax error.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareOp {
    Eq,
    Ge,
    Le,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ge => ">=",
            CompareOp::Le => "<=",
        }
    }
}

/// A literal on the right-hand side of a comparison. Numbers keep their
/// written form so rendering reproduces the input exactly.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryValue {
    Text(String),
    Number { text: String, value: f64 },
}

impl fmt::Display for QueryValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryValue::Text(s) => write!(f, "'{s}'"),
            QueryValue::Number { text, .. } => f.write_str(text),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// Dotted restrictable keyword, e.g. `target.MoleculeStoichiometricFormula`.
    pub keyword: String,
    pub op: CompareOp,
    pub value: QueryValue,
}

/// Conjunction of comparisons; always non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryAst {
    pub constraints: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("query syntax error at byte {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("keyword {keyword} compares text with an ordering operator")]
    TypeMismatch { keyword: String },
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Select,
    Star,
    Where,
    And,
    Open,
    Close,
    Op(CompareOp),
    Keyword(String),
    Value(QueryValue),
}

struct Lexer<'a> {
    input: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(input: &'a str) -> Self {
        Lexer {
            input,
            bytes: input.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn next(&mut self) -> Result<Option<(usize, Token)>, QueryError> {
        self.skip_ws();
        if self.pos >= self.bytes.len() {
            return Ok(None);
        }
        let start = self.pos;
        let token = match self.bytes[self.pos] {
            b'*' => {
                self.pos += 1;
                Token::Star
            }
            b'(' => {
                self.pos += 1;
                Token::Open
            }
            b')' => {
                self.pos += 1;
                Token::Close
            }
            b'=' => {
                self.pos += 1;
                Token::Op(CompareOp::Eq)
            }
            b'>' | b'<' => {
                let ge = self.bytes[self.pos] == b'>';
                if self.bytes.get(self.pos + 1) != Some(&b'=') {
                    return Err(QueryError::Syntax {
                        position: start,
                        expected: "operator =, >= or <=".into(),
                    });
                }
                self.pos += 2;
                Token::Op(if ge { CompareOp::Ge } else { CompareOp::Le })
            }
            b'\'' => {
                self.pos += 1;
                let content_start = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\'' {
                    self.pos += 1;
                }
                if self.pos >= self.bytes.len() {
                    return Err(QueryError::Syntax {
                        position: start,
                        expected: "closing quote".into(),
                    });
                }
                let text = self.input[content_start..self.pos].to_string();
                self.pos += 1;
                Token::Value(QueryValue::Text(text))
            }
            b if b.is_ascii_digit() || b == b'-' || b == b'+' => {
                while self.pos < self.bytes.len()
                    && matches!(self.bytes[self.pos], b'0'..=b'9' | b'.' | b'e' | b'E' | b'+' | b'-')
                {
                    self.pos += 1;
                }
                let text = &self.input[start..self.pos];
                let value = text.parse::<f64>().map_err(|_| QueryError::Syntax {
                    position: start,
                    expected: "numeric literal".into(),
                })?;
                Token::Value(QueryValue::Number {
                    text: text.to_string(),
                    value,
                })
            }
            b if b.is_ascii_alphabetic() || b == b'_' => {
                while self.pos < self.bytes.len()
                    && matches!(self.bytes[self.pos],
                        b'a'..=b'z' | b'A'..=b'Z' | b'0'..=b'9' | b'_' | b'.')
                {
                    self.pos += 1;
                }
                let word = &self.input[start..self.pos];
                match word.to_ascii_lowercase().as_str() {
                    "select" => Token::Select,
                    "where" => Token::Where,
                    "and" => Token::And,
                    _ => Token::Keyword(word.to_string()),
                }
            }
            _ => {
                return Err(QueryError::Syntax {
                    position: start,
                    expected: "token".into(),
                })
            }
        };
        Ok(Some((start, token)))
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    tokens: Vec<(usize, Token)>,
    index: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.index).map(|(_, t)| t)
    }

    fn position(&self) -> usize {
        self.tokens
            .get(self.index)
            .map(|(p, _)| *p)
            .unwrap_or(self.end)
    }

    fn advance(&mut self) -> Option<Token> {
        let token = self.tokens.get(self.index).map(|(_, t)| t.clone());
        if token.is_some() {
            self.index += 1;
        }
        token
    }

    fn expect(&mut self, expected: &Token, what: &str) -> Result<(), QueryError> {
        if self.peek() == Some(expected) {
            self.index += 1;
            Ok(())
        } else {
            Err(QueryError::Syntax {
                position: self.position(),
                expected: what.into(),
            })
        }
    }

    fn parse_conjunction(&mut self, out: &mut Vec<Comparison>) -> Result<(), QueryError> {
        self.parse_operand(out)?;
        while self.peek() == Some(&Token::And) {
            self.index += 1;
            self.parse_operand(out)?;
        }
        Ok(())
    }

    fn parse_operand(&mut self, out: &mut Vec<Comparison>) -> Result<(), QueryError> {
        if self.peek() == Some(&Token::Open) {
            self.index += 1;
            self.parse_conjunction(out)?;
            self.expect(&Token::Close, "closing parenthesis")?;
            Ok(())
        } else {
            out.push(self.parse_comparison()?);
            Ok(())
        }
    }

    fn parse_comparison(&mut self) -> Result<Comparison, QueryError> {
        let position = self.position();
        let keyword = match self.advance() {
            Some(Token::Keyword(k)) => k,
            _ => {
                return Err(QueryError::Syntax {
                    position,
                    expected: "restrictable keyword".into(),
                })
            }
        };
        let position = self.position();
        let op = match self.advance() {
            Some(Token::Op(op)) => op,
            _ => {
                return Err(QueryError::Syntax {
                    position,
                    expected: "operator =, >= or <=".into(),
                })
            }
        };
        let position = self.position();
        let value = match self.advance() {
            Some(Token::Value(v)) => v,
            _ => {
                return Err(QueryError::Syntax {
                    position,
                    expected: "quoted string or number".into(),
                })
            }
        };
        Ok(Comparison { keyword, op, value })
    }
}

/// Parse a query text into its conjunction of comparisons.
pub fn parse_query(text: &str) -> Result<QueryAst, QueryError> {
    let mut lexer = Lexer::new(text);
    let mut tokens = Vec::new();
    while let Some(token) = lexer.next()? {
        tokens.push(token);
    }
    let mut parser = Parser {
        tokens,
        index: 0,
        end: text.len(),
    };
    parser.expect(&Token::Select, "select")?;
    parser.expect(&Token::Star, "*")?;
    parser.expect(&Token::Where, "where")?;
    if parser.peek().is_none() {
        return Err(QueryError::Syntax {
            position: parser.end,
            expected: "at least one constraint".into(),
        });
    }
    let mut constraints = Vec::new();
    parser.parse_conjunction(&mut constraints)?;
    if parser.peek().is_some() {
        return Err(QueryError::Syntax {
            position: parser.position(),
            expected: "end of query".into(),
        });
    }
    Ok(QueryAst { constraints })
}

/// Canonical text for an AST: single spaces, one parenthesis group per
/// comparison. `parse_query(render(ast)) == ast`.
pub fn render(ast: &QueryAst) -> String {
    let constraints: Vec<String> = ast
        .constraints
        .iter()
        .map(|c| format!("(({} {} {}))", c.keyword, c.op.symbol(), c.value))
        .collect();
    format!("select * where {}", constraints.join(" AND "))
}

/// True iff every constraint holds for the record. A keyword absent from
/// the record fails its constraint; text equality is case-insensitive
/// (species symbols are queried in either case); ordering comparisons
/// require numeric values on both sides.
pub fn evaluate(ast: &QueryAst, record: &BTreeMap<String, String>) -> Result<bool, QueryError> {
    for constraint in &ast.constraints {
        let Some(actual) = record.get(&constraint.keyword) else {
            return Ok(false);
        };
        match constraint.op {
            CompareOp::Eq => match &constraint.value {
                QueryValue::Text(expected) => {
                    if !actual.trim().eq_ignore_ascii_case(expected.trim()) {
                        return Ok(false);
                    }
                }
                QueryValue::Number { value, .. } => match actual.trim().parse::<f64>() {
                    Ok(actual_value) => {
                        if actual_value != *value {
                            return Ok(false);
                        }
                    }
                    Err(_) => return Ok(false),
                },
            },
            CompareOp::Ge | CompareOp::Le => {
                let QueryValue::Number { value, .. } = &constraint.value else {
                    return Err(QueryError::TypeMismatch {
                        keyword: constraint.keyword.clone(),
                    });
                };
                let actual_value: f64 =
                    actual
                        .trim()
                        .parse()
                        .map_err(|_| QueryError::TypeMismatch {
                            keyword: constraint.keyword.clone(),
                        })?;
                let holds = match constraint.op {
                    CompareOp::Ge => actual_value >= *value,
                    CompareOp::Le => actual_value <= *value,
                    CompareOp::Eq => unreachable!(),
                };
                if !holds {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub const COLLISION_QUERY: &str = "select * where ((target.MoleculeStoichiometricFormula = 'CO')) AND \n    ((collider.AtomSymbol = 'he'))";
    pub const RADIATIVE_QUERY: &str = "select * where (RadTransWavelength >= 2.6006E7 AND RadTransWavelength <= 2.6008E7) AND ((MoleculeStoichiometricFormula = 'CO'))";

    fn record(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn collision_query_has_two_constraints() {
        let ast = parse_query(COLLISION_QUERY).unwrap();
        assert_eq!(ast.constraints.len(), 2);
        assert_eq!(
            ast.constraints[0].keyword,
            "target.MoleculeStoichiometricFormula"
        );
        assert_eq!(ast.constraints[0].op, CompareOp::Eq);
        assert_eq!(ast.constraints[0].value, QueryValue::Text("CO".into()));
        assert_eq!(ast.constraints[1].keyword, "collider.AtomSymbol");
        assert_eq!(ast.constraints[1].value, QueryValue::Text("he".into()));
    }

    #[test]
    fn radiative_query_has_three_constraints() {
        let ast = parse_query(RADIATIVE_QUERY).unwrap();
        assert_eq!(ast.constraints.len(), 3);
        assert_eq!(ast.constraints[0].op, CompareOp::Ge);
        assert_eq!(
            ast.constraints[0].value,
            QueryValue::Number {
                text: "2.6006E7".into(),
                value: 2.6006e7
            }
        );
        assert_eq!(ast.constraints[1].op, CompareOp::Le);
        assert_eq!(
            ast.constraints[1].value,
            QueryValue::Number {
                text: "2.6008E7".into(),
                value: 2.6008e7
            }
        );
        assert_eq!(ast.constraints[2].keyword, "MoleculeStoichiometricFormula");
    }

    #[test]
    fn empty_constraint_list_is_a_syntax_error() {
        assert!(matches!(
            parse_query("select * where"),
            Err(QueryError::Syntax { .. })
        ));
        assert!(matches!(
            parse_query("select * where ()"),
            Err(QueryError::Syntax { .. })
        ));
    }

    #[test]
    fn unsupported_operators_are_rejected() {
        assert!(parse_query("select * where ((A != 'x'))").is_err());
        assert!(parse_query("select * where ((A = 'x')) OR ((B = 'y'))").is_err());
        assert!(parse_query("select * where ((A > 1))").is_err());
    }

    #[test]
    fn render_canonical_form() {
        let ast = QueryAst {
            constraints: vec![Comparison {
                keyword: "A".into(),
                op: CompareOp::Eq,
                value: QueryValue::Text("x".into()),
            }],
        };
        assert_eq!(render(&ast), "select * where ((A = 'x'))");
    }

    #[test]
    fn render_parse_round_trip_on_fixture_queries() {
        for text in [COLLISION_QUERY, RADIATIVE_QUERY] {
            let ast = parse_query(text).unwrap();
            let rendered = render(&ast);
            assert_eq!(parse_query(&rendered).unwrap(), ast);
            assert_eq!(render(&parse_query(&rendered).unwrap()), rendered);
        }
    }

    #[test]
    fn evaluate_matches_collision_record() {
        let ast = parse_query(COLLISION_QUERY).unwrap();
        let rec = record(&[
            ("target.MoleculeStoichiometricFormula", "CO"),
            ("collider.AtomSymbol", "He"),
        ]);
        assert!(evaluate(&ast, &rec).unwrap());
        assert!(!evaluate(&ast, &record(&[])).unwrap());
    }

    #[test]
    fn evaluate_numeric_window() {
        let ast = parse_query(RADIATIVE_QUERY).unwrap();
        let rec = record(&[
            ("RadTransWavelength", "2.6007E7"),
            ("MoleculeStoichiometricFormula", "CO"),
        ]);
        assert!(evaluate(&ast, &rec).unwrap());
        let outside = record(&[
            ("RadTransWavelength", "2.7E7"),
            ("MoleculeStoichiometricFormula", "CO"),
        ]);
        assert!(!evaluate(&ast, &outside).unwrap());
    }

    #[test]
    fn ordering_against_text_is_a_type_error() {
        let ast = parse_query("select * where ((A >= 1.0))").unwrap();
        let rec = record(&[("A", "not a number")]);
        assert!(matches!(
            evaluate(&ast, &rec),
            Err(QueryError::TypeMismatch { .. })
        ));
        let ast = QueryAst {
            constraints: vec![Comparison {
                keyword: "A".into(),
                op: CompareOp::Ge,
                value: QueryValue::Text("x".into()),
            }],
        };
        assert!(matches!(
            evaluate(&ast, &record(&[("A", "1")])),
            Err(QueryError::TypeMismatch { .. })
        ));
    }

    fn arb_comparison() -> impl Strategy<Value = Comparison> {
        let keyword = prop::sample::select(vec!["A", "B.c", "RadTransWavelength", "x_y"]);
        let value = prop_oneof![
            "[a-zA-Z]{1,6}".prop_map(QueryValue::Text),
            (-1000i32..1000).prop_map(|n| QueryValue::Number {
                text: n.to_string(),
                value: n as f64
            }),
        ];
        (keyword, value).prop_map(|(keyword, value)| {
            let op = match &value {
                QueryValue::Text(_) => CompareOp::Eq,
                QueryValue::Number { value, .. } => {
                    if *value < 0.0 {
                        CompareOp::Le
                    } else {
                        CompareOp::Ge
                    }
                }
            };
            Comparison {
                keyword: keyword.to_string(),
                op,
                value,
            }
        })
    }

    proptest! {
        #[test]
        fn parse_render_identity(constraints in prop::collection::vec(arb_comparison(), 1..6)) {
            let ast = QueryAst { constraints };
            let rendered = render(&ast);
            let parsed = parse_query(&rendered).unwrap();
            prop_assert_eq!(&parsed, &ast);
            prop_assert_eq!(render(&parsed), rendered);
        }

        #[test]
        fn dropping_a_constraint_is_monotone(
            constraints in prop::collection::vec(arb_comparison(), 2..6),
            drop_index in 0usize..5,
            values in prop::collection::vec("[a-z0-9]{1,4}", 4),
        ) {
            let ast = QueryAst { constraints };
            let mut record = BTreeMap::new();
            for (c, v) in ast.constraints.iter().zip(values.iter().cycle()) {
                let value = match &c.value {
                    QueryValue::Text(_) => v.clone(),
                    QueryValue::Number { .. } => format!("{}", v.len()),
                };
                record.insert(c.keyword.clone(), value);
            }
            if let Ok(true) = evaluate(&ast, &record) {
                let mut fewer = ast.clone();
                fewer.constraints.remove(drop_index % fewer.constraints.len());
                prop_assert_eq!(evaluate(&fewer, &record), Ok(true));
            }
        }
    }
}
