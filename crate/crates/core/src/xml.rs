//! Minimal XML tree used by the document reader and writer.
//!
//! The tree keeps qualified names, attribute order and text nodes exactly as
//! they appear in the input so that subtrees the document model does not
//! interpret can be written back unchanged. Entity references for `&`, `<`,
//! `>` and `"` are resolved on read and re-applied on write.

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

/// Line/column position into the source text, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Location {
    pub line: u32,
    pub column: u32,
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

/// Compute the line/column of a byte offset.
pub fn location_at(input: &str, offset: usize) -> Location {
    let offset = offset.min(input.len());
    let mut line = 1u32;
    let mut column = 1u32;
    for b in input.as_bytes()[..offset].iter() {
        if *b == b'\n' {
            line += 1;
            column = 1;
        } else {
            column += 1;
        }
    }
    Location { line, column }
}

#[derive(Debug, Clone)]
pub enum XmlNode {
    Element(XmlElement),
    /// Character data with entities resolved. Whitespace is preserved.
    Text(String),
}

impl PartialEq for XmlNode {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (XmlNode::Element(a), XmlNode::Element(b)) => a == b,
            (XmlNode::Text(a), XmlNode::Text(b)) => a == b,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct XmlElement {
    /// Qualified name as written, prefix included.
    pub name: String,
    /// Attributes in document order, values with entities resolved.
    pub attrs: Vec<(String, String)>,
    pub children: Vec<XmlNode>,
    /// Whether the element was written as `<name .../>`.
    pub self_closing: bool,
    /// Byte offset of the start tag in the source; 0 for built elements.
    pub pos: usize,
}

impl PartialEq for XmlElement {
    fn eq(&self, other: &Self) -> bool {
        // `pos` is a diagnostic detail, not part of the value.
        self.name == other.name
            && self.attrs == other.attrs
            && self.children == other.children
            && self.self_closing == other.self_closing
    }
}

impl XmlElement {
    pub fn new(name: &str) -> Self {
        XmlElement {
            name: name.to_string(),
            ..Default::default()
        }
    }

    /// Local part of the qualified name.
    pub fn local_name(&self) -> &str {
        match self.name.split_once(':') {
            Some((_, local)) => local,
            None => &self.name,
        }
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    /// Attribute looked up by local name, ignoring any prefix.
    pub fn attr_local(&self, local: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k.split(':').next_back() == Some(local))
            .map(|(_, v)| v.as_str())
    }

    pub fn child_elements(&self) -> impl Iterator<Item = &XmlElement> {
        self.children.iter().filter_map(|n| match n {
            XmlNode::Element(e) => Some(e),
            XmlNode::Text(_) => None,
        })
    }

    /// First child element whose local name matches.
    pub fn child(&self, local: &str) -> Option<&XmlElement> {
        self.child_elements().find(|e| e.local_name() == local)
    }

    /// Concatenated character data directly under this element.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for node in &self.children {
            if let XmlNode::Text(t) = node {
                out.push_str(t);
            }
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{message} at byte {offset}")]
pub struct XmlError {
    pub message: String,
    pub offset: usize,
}

fn start_to_element(reader: &Reader<&[u8]>, start: &BytesStart<'_>) -> Result<XmlElement, XmlError> {
    let pos = reader.buffer_position() as usize;
    let name = String::from_utf8_lossy(start.name().as_ref()).into_owned();
    let mut attrs = Vec::new();
    for attr in start.attributes() {
        let attr = attr.map_err(|e| XmlError {
            message: format!("bad attribute: {e}"),
            offset: pos,
        })?;
        let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
        let value = attr
            .unescape_value()
            .map_err(|e| XmlError {
                message: format!("bad attribute value: {e}"),
                offset: pos,
            })?
            .into_owned();
        attrs.push((key, value));
    }
    Ok(XmlElement {
        name,
        attrs,
        children: Vec::new(),
        self_closing: false,
        pos,
    })
}

/// Parse a full document into its root element.
pub fn parse_tree(input: &str) -> Result<XmlElement, XmlError> {
    let mut reader = Reader::from_str(input);
    reader.config_mut().trim_text(false);
    let mut stack: Vec<XmlElement> = Vec::new();
    let mut root: Option<XmlElement> = None;

    loop {
        let offset = reader.buffer_position() as usize;
        match reader.read_event() {
            Err(e) => {
                return Err(XmlError {
                    message: e.to_string(),
                    offset,
                })
            }
            Ok(Event::Start(start)) => {
                let element = start_to_element(&reader, &start)?;
                stack.push(element);
            }
            Ok(Event::Empty(start)) => {
                let mut element = start_to_element(&reader, &start)?;
                element.self_closing = true;
                attach(&mut stack, &mut root, element, offset)?;
            }
            Ok(Event::End(_)) => {
                let element = stack.pop().ok_or_else(|| XmlError {
                    message: "unexpected closing tag".into(),
                    offset,
                })?;
                attach(&mut stack, &mut root, element, offset)?;
            }
            Ok(Event::Text(t)) => {
                let text = t
                    .unescape()
                    .map_err(|e| XmlError {
                        message: e.to_string(),
                        offset,
                    })?
                    .into_owned();
                if let Some(parent) = stack.last_mut() {
                    parent.children.push(XmlNode::Text(text));
                }
                // Text outside the root (prolog whitespace) is dropped.
            }
            Ok(Event::CData(c)) => {
                let text = String::from_utf8_lossy(&c).into_owned();
                if let Some(parent) = stack.last_mut() {
                    parent.children.push(XmlNode::Text(text));
                }
            }
            Ok(Event::Decl(_)) | Ok(Event::Comment(_)) | Ok(Event::PI(_)) | Ok(Event::DocType(_)) => {}
            Ok(Event::Eof) => break,
        }
    }
    if !stack.is_empty() {
        return Err(XmlError {
            message: "unclosed element".into(),
            offset: input.len(),
        });
    }
    root.ok_or_else(|| XmlError {
        message: "no root element".into(),
        offset: 0,
    })
}

fn attach(
    stack: &mut [XmlElement],
    root: &mut Option<XmlElement>,
    element: XmlElement,
    offset: usize,
) -> Result<(), XmlError> {
    match stack.last_mut() {
        Some(parent) => {
            parent.children.push(XmlNode::Element(element));
            Ok(())
        }
        None => {
            if root.is_some() {
                Err(XmlError {
                    message: "multiple root elements".into(),
                    offset,
                })
            } else {
                *root = Some(element);
                Ok(())
            }
        }
    }
}

pub fn escape_text(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            _ => out.push(c),
        }
    }
    out
}

pub fn escape_attr(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

/// Write an element tree exactly as parsed: attribute order, text nodes and
/// self-closing forms are kept, so `write_verbatim(parse(x)) == x` for any
/// subtree this module produced.
pub fn write_verbatim(element: &XmlElement, out: &mut String) {
    out.push('<');
    out.push_str(&element.name);
    for (k, v) in &element.attrs {
        out.push(' ');
        out.push_str(k);
        out.push_str("=\"");
        out.push_str(&escape_attr(v));
        out.push('"');
    }
    if element.self_closing && element.children.is_empty() {
        out.push_str("/>");
        return;
    }
    out.push('>');
    for child in &element.children {
        match child {
            XmlNode::Element(e) => write_verbatim(e, out),
            XmlNode::Text(t) => out.push_str(&escape_text(t)),
        }
    }
    out.push_str("</");
    out.push_str(&element.name);
    out.push('>');
}
