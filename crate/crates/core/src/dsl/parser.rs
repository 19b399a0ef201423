use std::collections::BTreeMap;

use super::lexer::{tokenize, Tok, Token};
use super::{ExprNode, NodeKind, ParseError, ParseErrorKind, Span};

const ADD_BP: (u8, u8) = (1, 2);
const MUL_BP: (u8, u8) = (3, 4);
const NEG_RBP: u8 = 5;
// right-associative, and tighter than unary minus
const POW_BP: (u8, u8) = (8, 7);

pub(crate) struct Parser<'a> {
    src: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    dim: usize,
    params: &'a BTreeMap<String, f64>,
}

impl<'a> Parser<'a> {
    pub fn new(
        src: &'a str,
        dim: usize,
        params: &'a BTreeMap<String, f64>,
    ) -> Result<Self, ParseError> {
        Ok(Parser {
            src,
            tokens: tokenize(src)?,
            pos: 0,
            dim,
            params,
        })
    }

    pub fn parse(mut self) -> Result<ExprNode, ParseError> {
        let root = self.expr(0)?;
        let t = self.peek().clone();
        if t.tok != Tok::End {
            return Err(self.unexpected(&t));
        }
        Ok(root)
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.tok != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, t: &Token) -> ParseError {
        let kind = if t.tok == Tok::End {
            ParseErrorKind::UnexpectedEnd
        } else {
            ParseErrorKind::UnexpectedToken {
                lexeme: t.lexeme(self.src).to_string(),
            }
        };
        ParseError {
            offset: t.span.start,
            kind,
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<Token, ParseError> {
        let t = self.bump();
        if t.tok == tok {
            Ok(t)
        } else {
            Err(self.unexpected(&t))
        }
    }

    fn expr(&mut self, min_bp: u8) -> Result<ExprNode, ParseError> {
        let mut lhs = self.prefix()?;
        loop {
            let t = self.peek().clone();
            let (lbp, rbp) = match t.tok {
                Tok::Plus | Tok::Minus => ADD_BP,
                Tok::Star | Tok::Slash => MUL_BP,
                Tok::Caret => POW_BP,
                _ => break,
            };
            if lbp < min_bp {
                break;
            }
            self.bump();
            let rhs = self.expr(rbp)?;
            let span = lhs.span.join(rhs.span);
            let kind = match t.tok {
                Tok::Plus => NodeKind::Add(Box::new(lhs), Box::new(rhs)),
                Tok::Minus => NodeKind::Sub(Box::new(lhs), Box::new(rhs)),
                Tok::Star => NodeKind::Mul(Box::new(lhs), Box::new(rhs)),
                Tok::Slash => NodeKind::Div(Box::new(lhs), Box::new(rhs)),
                Tok::Caret => {
                    let exponent = rhs.constant_value().ok_or(ParseError {
                        offset: rhs.span.start,
                        kind: ParseErrorKind::NonConstantExponent,
                    })?;
                    if !exponent.is_finite() {
                        return Err(ParseError {
                            offset: rhs.span.start,
                            kind: ParseErrorKind::NonConstantExponent,
                        });
                    }
                    NodeKind::Pow(Box::new(lhs), exponent)
                }
                _ => unreachable!(),
            };
            lhs = ExprNode { kind, span };
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<ExprNode, ParseError> {
        let t = self.bump();
        match &t.tok {
            Tok::Number(v) => Ok(ExprNode {
                kind: NodeKind::Const(*v),
                span: t.span,
            }),
            Tok::Minus => {
                let operand = self.expr(NEG_RBP)?;
                let span = t.span.join(operand.span);
                Ok(ExprNode {
                    kind: NodeKind::Neg(Box::new(operand)),
                    span,
                })
            }
            Tok::LParen => {
                let inner = self.expr(0)?;
                let close = self.expect(Tok::RParen)?;
                // parentheses only widen the span; the tree is unchanged
                Ok(ExprNode {
                    kind: inner.kind,
                    span: t.span.join(close.span),
                })
            }
            Tok::Ident(name) => self.identifier(name.clone(), t.span),
            _ => Err(self.unexpected(&t)),
        }
    }

    fn identifier(&mut self, name: String, span: Span) -> Result<ExprNode, ParseError> {
        if name == "sqrt" || name == "abs" {
            return self.call(name, span);
        }
        if let Some(kind) = self.coordinate(&name, span)? {
            return Ok(ExprNode { kind, span });
        }
        if let Some(&value) = self.params.get(&name) {
            return Ok(ExprNode {
                kind: NodeKind::Param { name, value },
                span,
            });
        }
        Err(ParseError {
            offset: span.start,
            kind: ParseErrorKind::UnknownIdentifier { name },
        })
    }

    fn coordinate(&self, name: &str, span: Span) -> Result<Option<NodeKind>, ParseError> {
        let (head, digits) = name.split_at(1);
        if !(head == "x" || head == "y")
            || digits.is_empty()
            || !digits.bytes().all(|b| b.is_ascii_digit())
        {
            return Ok(None);
        }
        let index = digits.parse::<usize>().ok().filter(|&i| i < self.dim);
        match index {
            Some(i) if head == "x" => Ok(Some(NodeKind::X(i))),
            Some(i) => Ok(Some(NodeKind::Y(i))),
            None => Err(ParseError {
                offset: span.start,
                kind: ParseErrorKind::IndexOutOfRange {
                    name: name.to_string(),
                    dim: self.dim,
                },
            }),
        }
    }

    fn call(&mut self, name: String, span: Span) -> Result<ExprNode, ParseError> {
        let open = self.peek().clone();
        if open.tok != Tok::LParen {
            return Err(ParseError {
                offset: open.span.start,
                kind: ParseErrorKind::Arity {
                    function: name,
                    found: 0,
                },
            });
        }
        self.bump();
        let mut args = Vec::new();
        if self.peek().tok != Tok::RParen {
            loop {
                args.push(self.expr(0)?);
                if self.peek().tok == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        let close = self.expect(Tok::RParen)?;
        if args.len() != 1 {
            return Err(ParseError {
                offset: span.start,
                kind: ParseErrorKind::Arity {
                    function: name,
                    found: args.len(),
                },
            });
        }
        let arg = Box::new(args.pop().expect("one argument"));
        let kind = if name == "sqrt" {
            NodeKind::Sqrt(arg)
        } else {
            NodeKind::Abs(arg)
        };
        Ok(ExprNode {
            kind,
            span: span.join(close.span),
        })
    }
}
