//! Declarative per-merchant templates that turn purchase-confirmation email
//! text into structured orders.
//!
//! A template file is line-oriented:
//!
//! ```text
//! merchant: acme
//! sender: orders@acme.example
//! date: Order placed: {DATE}
//! order: Order number: {ORDER_ID}
//! item: {QTY} x {ITEM} at {PRICE} each
//! ```
//!
//! The item line may match repeatedly for multi-item orders. Input emails are
//! plain text: first line `From: <address>`, a blank line, then the body.

use crate::datastore::PurchaseEvent;
use chrono::{NaiveDate, NaiveDateTime};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReceiptError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{file}:{line}: {msg}")]
    TemplateSyntax { file: String, line: usize, msg: String },
    #[error("duplicate merchant {0}")]
    DuplicateMerchant(String),
    #[error("malformed email: {0}")]
    MalformedEmail(String),
    #[error("no template matches sender {0}")]
    NoTemplateMatch(String),
    #[error("template {merchant}: {msg}")]
    GrammarMismatch { merchant: String, msg: String },
    #[error("bad price {0:?}")]
    BadPrice(String),
    #[error("bad date {0:?}")]
    BadDate(String),
    #[error("bad quantity {0:?}")]
    BadQuantity(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Slot {
    Item,
    Price,
    Qty,
    OrderId,
    Date,
}

impl Slot {
    fn parse(name: &str) -> Option<Slot> {
        match name {
            "ITEM" => Some(Slot::Item),
            "PRICE" => Some(Slot::Price),
            "QTY" => Some(Slot::Qty),
            "ORDER_ID" => Some(Slot::OrderId),
            "DATE" => Some(Slot::Date),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
enum Segment {
    Literal(String),
    Slot(Slot),
}

/// One body-line pattern: literal anchors interleaved with capture slots.
#[derive(Debug, Clone)]
pub struct LinePattern {
    segments: Vec<Segment>,
}

impl LinePattern {
    /// Parses an anchor string with `{SLOT}` placeholders. Adjacent slots with
    /// no literal anchor between them are rejected as ambiguous.
    fn parse(text: &str) -> Result<LinePattern, String> {
        let mut segments = Vec::new();
        let mut rest = text;
        while !rest.is_empty() {
            match rest.find('{') {
                None => {
                    segments.push(Segment::Literal(rest.to_string()));
                    rest = "";
                }
                Some(open) => {
                    if open > 0 {
                        segments.push(Segment::Literal(rest[..open].to_string()));
                    }
                    let after = &rest[open + 1..];
                    let close = after
                        .find('}')
                        .ok_or_else(|| format!("unterminated slot in {text:?}"))?;
                    let name = &after[..close];
                    let slot = Slot::parse(name)
                        .ok_or_else(|| format!("unknown slot {{{name}}}"))?;
                    if matches!(segments.last(), Some(Segment::Slot(_))) {
                        return Err(format!(
                            "adjacent slots without a literal anchor in {text:?}"
                        ));
                    }
                    segments.push(Segment::Slot(slot));
                    rest = &after[close + 1..];
                }
            }
        }
        if segments.is_empty() {
            return Err("empty pattern".to_string());
        }
        if !segments.iter().any(|s| matches!(s, Segment::Literal(_))) {
            return Err(format!("pattern {text:?} needs at least one literal anchor"));
        }
        Ok(LinePattern { segments })
    }

    fn slots(&self) -> Vec<Slot> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot(slot) => Some(*slot),
                Segment::Literal(_) => None,
            })
            .collect()
    }

    /// Matches a whole line, returning slot captures. Captures are
    /// leftmost-nonempty: after a slot, the next anchor is searched from the
    /// first position that leaves the capture non-empty.
    fn match_line<'a>(&self, line: &'a str) -> Option<Vec<(Slot, &'a str)>> {
        let mut captures = Vec::new();
        let mut pos = 0usize;
        let mut pending: Option<Slot> = None;
        for segment in &self.segments {
            match segment {
                Segment::Slot(slot) => {
                    pending = Some(*slot);
                }
                Segment::Literal(lit) => {
                    match pending.take() {
                        None => {
                            if !line[pos..].starts_with(lit.as_str()) {
                                return None;
                            }
                            pos += lit.len();
                        }
                        Some(slot) => {
                            let hay = &line[pos..];
                            let first_char = hay.chars().next()?;
                            let search_from = first_char.len_utf8();
                            let idx = search_from + hay[search_from..].find(lit.as_str())?;
                            captures.push((slot, &hay[..idx]));
                            pos += idx + lit.len();
                        }
                    }
                }
            }
        }
        if let Some(slot) = pending {
            if pos >= line.len() {
                return None;
            }
            captures.push((slot, &line[pos..]));
        } else if pos != line.len() {
            return None;
        }
        Some(captures)
    }
}

/// Declarative receipt structure for one merchant.
#[derive(Debug, Clone)]
pub struct Template {
    pub merchant_id: String,
    pub sender_pattern: String,
    date_line: LinePattern,
    order_line: LinePattern,
    item_line: LinePattern,
}

impl Template {
    pub fn date_pattern(&self) -> &LinePattern {
        &self.date_line
    }

    pub fn order_pattern(&self) -> &LinePattern {
        &self.order_line
    }

    pub fn item_pattern(&self) -> &LinePattern {
        &self.item_line
    }

    /// Renders one order body line-for-line so that parsing recovers it.
    pub fn render_line(pattern: &LinePattern, values: &BTreeMap<Slot, String>) -> String {
        let mut out = String::new();
        for segment in &pattern.segments {
            match segment {
                Segment::Literal(lit) => out.push_str(lit),
                Segment::Slot(slot) => out.push_str(values.get(slot).map(String::as_str).unwrap_or("")),
            }
        }
        out
    }

    pub fn item_has_qty(&self) -> bool {
        self.item_line.slots().contains(&Slot::Qty)
    }
}

/// Templates in load order with merchant lookup.
#[derive(Debug, Clone, Default)]
pub struct TemplateSet {
    templates: Vec<Template>,
    by_merchant: BTreeMap<String, usize>,
}

impl TemplateSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn add(&mut self, template: Template) -> Result<(), ReceiptError> {
        if self.by_merchant.contains_key(&template.merchant_id) {
            return Err(ReceiptError::DuplicateMerchant(template.merchant_id));
        }
        self.by_merchant
            .insert(template.merchant_id.clone(), self.templates.len());
        self.templates.push(template);
        Ok(())
    }

    pub fn get(&self, merchant_id: &str) -> Option<&Template> {
        self.by_merchant.get(merchant_id).map(|&i| &self.templates[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Template> {
        self.templates.iter()
    }

    /// First template (in load order) whose sender glob matches.
    pub fn find_for_sender(&self, sender: &str) -> Option<&Template> {
        self.templates
            .iter()
            .find(|t| glob_match(&t.sender_pattern, sender))
    }
}

/// Glob match with `*` (any run) and `?` (single char).
pub fn glob_match(pattern: &str, text: &str) -> bool {
    let pat: Vec<char> = pattern.chars().collect();
    let txt: Vec<char> = text.chars().collect();
    let (mut p, mut t) = (0usize, 0usize);
    let mut star: Option<(usize, usize)> = None;
    while t < txt.len() {
        if p < pat.len() && (pat[p] == '?' || pat[p] == txt[t]) {
            p += 1;
            t += 1;
        } else if p < pat.len() && pat[p] == '*' {
            star = Some((p, t));
            p += 1;
        } else if let Some((sp, st)) = star {
            p = sp + 1;
            t = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    while p < pat.len() && pat[p] == '*' {
        p += 1;
    }
    p == pat.len()
}

fn template_err(file: &Path, line: usize, msg: impl Into<String>) -> ReceiptError {
    ReceiptError::TemplateSyntax {
        file: file.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Parses one template file.
pub fn parse_template(path: &Path, text: &str) -> Result<Template, ReceiptError> {
    let mut merchant = None;
    let mut sender = None;
    let mut date_line = None;
    let mut order_line = None;
    let mut item_line = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| template_err(path, line_no, format!("expected 'key: value', got {line:?}")))?;
        let value = value.strip_prefix(' ').unwrap_or(value);
        let set_once = |slot: &mut Option<(usize, String)>, key: &str| -> Result<(), ReceiptError> {
            if slot.is_some() {
                return Err(template_err(path, line_no, format!("duplicate {key} line")));
            }
            *slot = Some((line_no, value.to_string()));
            Ok(())
        };
        match key {
            "merchant" => set_once(&mut merchant, "merchant")?,
            "sender" => set_once(&mut sender, "sender")?,
            "date" => set_once(&mut date_line, "date")?,
            "order" => set_once(&mut order_line, "order")?,
            "item" => set_once(&mut item_line, "item")?,
            other => return Err(template_err(path, line_no, format!("unknown key {other:?}"))),
        }
    }

    let (_, merchant_id) = merchant.ok_or_else(|| template_err(path, 0, "missing merchant line"))?;
    let (_, sender_pattern) = sender.ok_or_else(|| template_err(path, 0, "missing sender line"))?;
    if merchant_id.is_empty() {
        return Err(template_err(path, 0, "empty merchant id"));
    }
    if sender_pattern.is_empty() {
        return Err(template_err(path, 0, "empty sender pattern"));
    }

    let parse_pattern = |field: Option<(usize, String)>,
                         key: &str,
                         required: &[Slot],
                         allowed: &[Slot]|
     -> Result<LinePattern, ReceiptError> {
        let (line_no, text) =
            field.ok_or_else(|| template_err(path, 0, format!("missing {key} line")))?;
        let pattern = LinePattern::parse(&text).map_err(|msg| template_err(path, line_no, msg))?;
        let slots = pattern.slots();
        for slot in required {
            if !slots.contains(slot) {
                return Err(template_err(
                    path,
                    line_no,
                    format!("{key} line is missing the {slot:?} slot"),
                ));
            }
        }
        for slot in &slots {
            if !allowed.contains(slot) {
                return Err(template_err(
                    path,
                    line_no,
                    format!("{key} line may not contain the {slot:?} slot"),
                ));
            }
            if slots.iter().filter(|s| *s == slot).count() > 1 {
                return Err(template_err(path, line_no, format!("repeated {slot:?} slot")));
            }
        }
        Ok(pattern)
    };

    Ok(Template {
        merchant_id,
        sender_pattern,
        date_line: parse_pattern(date_line, "date", &[Slot::Date], &[Slot::Date])?,
        order_line: parse_pattern(order_line, "order", &[Slot::OrderId], &[Slot::OrderId])?,
        item_line: parse_pattern(
            item_line,
            "item",
            &[Slot::Item, Slot::Price],
            &[Slot::Item, Slot::Price, Slot::Qty],
        )?,
    })
}

/// Loads every file in a directory as a template, in filename order.
pub fn load_templates(dir: &Path) -> Result<TemplateSet, ReceiptError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut set = TemplateSet::new();
    for path in paths {
        let text = std::fs::read_to_string(&path)?;
        set.add(parse_template(&path, &text)?)?;
    }
    Ok(set)
}

/// One parsed receipt line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderLine {
    pub item_name: String,
    pub price_cents: i64,
    pub quantity: u32,
}

/// One structured order recovered from an email.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedOrder {
    pub merchant_id: String,
    pub order_id: String,
    pub timestamp: i64,
    pub lines: Vec<OrderLine>,
}

/// Applies the first sender-matching template to an email.
pub fn parse_email(raw: &str, templates: &TemplateSet) -> Result<ParsedOrder, ReceiptError> {
    let mut lines = raw.lines();
    let first = lines
        .next()
        .ok_or_else(|| ReceiptError::MalformedEmail("empty input".to_string()))?;
    let sender = first
        .strip_prefix("From: ")
        .ok_or_else(|| ReceiptError::MalformedEmail("first line must be 'From: <address>'".to_string()))?
        .trim();

    let template = templates
        .find_for_sender(sender)
        .ok_or_else(|| ReceiptError::NoTemplateMatch(sender.to_string()))?;

    let mismatch = |msg: &str| ReceiptError::GrammarMismatch {
        merchant: template.merchant_id.clone(),
        msg: msg.to_string(),
    };

    let mut date_text: Option<&str> = None;
    let mut order_id: Option<&str> = None;
    let mut items: Vec<(Option<&str>, &str, &str)> = Vec::new(); // (qty, item, price)

    for line in lines {
        if date_text.is_none() {
            if let Some(captures) = template.date_line.match_line(line) {
                date_text = captures.iter().find(|(s, _)| *s == Slot::Date).map(|&(_, v)| v);
                continue;
            }
        }
        if order_id.is_none() {
            if let Some(captures) = template.order_line.match_line(line) {
                order_id = captures
                    .iter()
                    .find(|(s, _)| *s == Slot::OrderId)
                    .map(|&(_, v)| v);
                continue;
            }
        }
        if let Some(captures) = template.item_line.match_line(line) {
            let mut qty = None;
            let mut item = None;
            let mut price = None;
            for (slot, value) in captures {
                match slot {
                    Slot::Qty => qty = Some(value),
                    Slot::Item => item = Some(value),
                    Slot::Price => price = Some(value),
                    _ => {}
                }
            }
            if let (Some(item), Some(price)) = (item, price) {
                items.push((qty, item, price));
            }
        }
    }

    let date_text = date_text.ok_or_else(|| mismatch("no line matched the date anchor"))?;
    let order_id = order_id.ok_or_else(|| mismatch("no line matched the order anchor"))?;
    if items.is_empty() {
        return Err(mismatch("no line matched the item anchor"));
    }

    let timestamp = parse_date(date_text)?;
    let mut order_lines = Vec::with_capacity(items.len());
    for (qty, item, price) in items {
        let quantity = match qty {
            None => 1,
            Some(text) => {
                let q: u32 = text
                    .trim()
                    .parse()
                    .map_err(|_| ReceiptError::BadQuantity(text.to_string()))?;
                if q == 0 {
                    return Err(ReceiptError::BadQuantity(text.to_string()));
                }
                q
            }
        };
        order_lines.push(OrderLine {
            item_name: item.to_string(),
            price_cents: normalize_price(price)?,
            quantity,
        });
    }

    Ok(ParsedOrder {
        merchant_id: template.merchant_id.clone(),
        order_id: order_id.to_string(),
        timestamp,
        lines: order_lines,
    })
}

/// Parses a captured date to UTC epoch seconds. Accepts `2014-02-03T10:15:00Z`,
/// `2014-02-03 10:15:00`, and `2014-02-03`.
pub fn parse_date(text: &str) -> Result<i64, ReceiptError> {
    let text = text.trim();
    if let Ok(dt) = NaiveDateTime::parse_from_str(text, "%Y-%m-%dT%H:%M:%SZ") {
        return Ok(dt.and_utc().timestamp());
    }
    if let Ok(dt) = NaiveDateTime::parse_from_str(text, "%Y-%m-%d %H:%M:%S") {
        return Ok(dt.and_utc().timestamp());
    }
    if let Ok(d) = NaiveDate::parse_from_str(text, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp());
    }
    Err(ReceiptError::BadDate(text.to_string()))
}

/// Renders epoch seconds in the canonical receipt date form.
pub fn format_date(timestamp: i64) -> String {
    chrono::DateTime::from_timestamp(timestamp, 0)
        .expect("timestamp in range")
        .format("%Y-%m-%dT%H:%M:%SZ")
        .to_string()
}

/// Strips the currency symbol and thousands separators from a captured price
/// and returns cents. At most two decimal digits are allowed.
pub fn normalize_price(text: &str) -> Result<i64, ReceiptError> {
    let bad = || ReceiptError::BadPrice(text.to_string());
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(bad());
    }
    let mut body = trimmed.strip_prefix('$').unwrap_or(trimmed);
    if body.starts_with('-') {
        return Err(bad());
    }
    let without_commas: String;
    if body.contains(',') {
        without_commas = body.replace(',', "");
        body = &without_commas;
    }
    let (int_part, frac_part) = match body.split_once('.') {
        None => (body, ""),
        Some((i, f)) => {
            if f.contains('.') || f.is_empty() {
                return Err(bad());
            }
            (i, f)
        }
    };
    if int_part.is_empty()
        || !int_part.bytes().all(|b| b.is_ascii_digit())
        || !frac_part.bytes().all(|b| b.is_ascii_digit())
        || frac_part.len() > 2
    {
        return Err(bad());
    }
    let dollars: i64 = int_part.parse().map_err(|_| bad())?;
    let cents_frac: i64 = match frac_part.len() {
        0 => 0,
        1 => frac_part.parse::<i64>().map_err(|_| bad())? * 10,
        _ => frac_part.parse().map_err(|_| bad())?,
    };
    dollars
        .checked_mul(100)
        .and_then(|c| c.checked_add(cents_frac))
        .ok_or_else(bad)
}

/// Canonical rendering of a price in cents, e.g. 1234 -> "$12.34".
pub fn format_price_cents(price_cents: i64) -> String {
    format!("${}.{:02}", price_cents / 100, price_cents % 100)
}

/// One purchase event per line per unit of quantity, all sharing the order id
/// and timestamp. Items are not categorized at this stage.
pub fn explode_order(order: &ParsedOrder, user_id: &str) -> Vec<PurchaseEvent> {
    let mut events = Vec::new();
    for line in &order.lines {
        for _ in 0..line.quantity {
            events.push(PurchaseEvent {
                user_id: user_id.to_string(),
                timestamp: order.timestamp,
                item_name: line.item_name.clone(),
                item_id: line.item_name.clone(),
                price_cents: line.price_cents,
                category: None,
                order_id: order.order_id.clone(),
                merchant_id: order.merchant_id.clone(),
            });
        }
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    const ACME: &str = "merchant: acme\n\
                        sender: *@acme.example\n\
                        date: Order placed: {DATE}\n\
                        order: Order number: {ORDER_ID}\n\
                        item: {QTY} x {ITEM} at {PRICE} each\n";

    fn acme_set() -> TemplateSet {
        let mut set = TemplateSet::new();
        set.add(parse_template(Path::new("acme.tmpl"), ACME).unwrap())
            .unwrap();
        set
    }

    #[test]
    fn normalize_price_examples() {
        assert_eq!(normalize_price("$12.00").unwrap(), 1200);
        assert_eq!(normalize_price("1,234.56").unwrap(), 123456);
        assert_eq!(normalize_price("12").unwrap(), 1200);
        assert_eq!(normalize_price("12.5").unwrap(), 1250);
        assert!(matches!(normalize_price("12.0.0"), Err(ReceiptError::BadPrice(_))));
        assert!(matches!(normalize_price("-3.00"), Err(ReceiptError::BadPrice(_))));
        assert!(matches!(normalize_price("12.345"), Err(ReceiptError::BadPrice(_))));
        assert!(matches!(normalize_price("12a"), Err(ReceiptError::BadPrice(_))));
        assert!(matches!(normalize_price(""), Err(ReceiptError::BadPrice(_))));
    }

    #[test]
    fn glob_match_basics() {
        assert!(glob_match("*@acme.example", "orders@acme.example"));
        assert!(glob_match("orders@acme.example", "orders@acme.example"));
        assert!(!glob_match("*@acme.example", "orders@other.example"));
        assert!(glob_match("a?c", "abc"));
        assert!(!glob_match("a?c", "ac"));
        assert!(glob_match("*", ""));
    }

    #[test]
    fn parse_two_item_receipt() {
        let email = "From: orders@acme.example\n\
                     \n\
                     Thank you for shopping with us.\n\
                     Order number: A-123\n\
                     Order placed: 2014-02-03T10:15:00Z\n\
                     2 x Gadget Pro at $12.99 each\n\
                     1 x Widget at $3.00 each\n\
                     Total: $28.98\n";
        let order = parse_email(email, &acme_set()).unwrap();
        assert_eq!(order.merchant_id, "acme");
        assert_eq!(order.order_id, "A-123");
        assert_eq!(order.timestamp, parse_date("2014-02-03T10:15:00Z").unwrap());
        assert_eq!(
            order.lines,
            vec![
                OrderLine { item_name: "Gadget Pro".into(), price_cents: 1299, quantity: 2 },
                OrderLine { item_name: "Widget".into(), price_cents: 300, quantity: 1 },
            ]
        );
    }

    #[test]
    fn unknown_sender_is_no_template_match() {
        let email = "From: noreply@unknown.example\n\n...\n";
        assert!(matches!(
            parse_email(email, &acme_set()),
            Err(ReceiptError::NoTemplateMatch(_))
        ));
    }

    #[test]
    fn impossible_calendar_date_is_bad_date() {
        let email = "From: orders@acme.example\n\
                     \n\
                     Order number: A-1\n\
                     Order placed: 2014-02-31\n\
                     1 x Widget at $3.00 each\n";
        assert!(matches!(parse_email(email, &acme_set()), Err(ReceiptError::BadDate(_))));
    }

    #[test]
    fn missing_anchors_are_grammar_mismatch() {
        let email = "From: orders@acme.example\n\
                     \n\
                     Order placed: 2014-02-03\n\
                     1 x Widget at $3.00 each\n";
        let err = parse_email(email, &acme_set()).unwrap_err();
        assert!(matches!(err, ReceiptError::GrammarMismatch { .. }), "{err}");
    }

    #[test]
    fn explode_order_expands_quantities_and_shares_time() {
        let order = ParsedOrder {
            merchant_id: "acme".into(),
            order_id: "o1".into(),
            timestamp: 1_000,
            lines: vec![
                OrderLine { item_name: "A".into(), price_cents: 500, quantity: 1 },
                OrderLine { item_name: "B".into(), price_cents: 700, quantity: 2 },
            ],
        };
        let events = explode_order(&order, "u1");
        assert_eq!(events.len(), 3);
        let prices: Vec<i64> = events.iter().map(|e| e.price_cents).collect();
        assert_eq!(prices, vec![500, 700, 700]);
        assert!(events.iter().all(|e| e.timestamp == 1_000 && e.order_id == "o1"));
    }

    #[test]
    fn load_templates_from_directory() {
        let dir = tempdir().unwrap();
        std::fs::write(dir.path().join("acme.tmpl"), ACME).unwrap();
        std::fs::write(
            dir.path().join("bmart.tmpl"),
            "merchant: bmart\nsender: *@bmart.example\ndate: Date: {DATE}\norder: Ref: {ORDER_ID}\nitem: Item: {ITEM} Price: {PRICE}\n",
        )
        .unwrap();
        let set = load_templates(dir.path()).unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.get("acme").is_some());
        assert!(set.get("bmart").is_some());

        let empty = tempdir().unwrap();
        assert_eq!(load_templates(empty.path()).unwrap().len(), 0);
    }

    #[test]
    fn template_missing_price_slot_is_named_in_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("broken.tmpl");
        std::fs::write(
            &path,
            "merchant: broken\nsender: *@x.example\ndate: D: {DATE}\norder: O: {ORDER_ID}\nitem: I: {ITEM}\n",
        )
        .unwrap();
        let err = load_templates(dir.path()).unwrap_err();
        match err {
            ReceiptError::TemplateSyntax { file, line, msg } => {
                assert!(file.contains("broken.tmpl"));
                assert_eq!(line, 5);
                assert!(msg.contains("Price"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn duplicate_merchant_is_an_error() {
        let dir = tempdir().unwrap();
        std::fs::write(dir.path().join("a.tmpl"), ACME).unwrap();
        std::fs::write(dir.path().join("b.tmpl"), ACME).unwrap();
        assert!(matches!(
            load_templates(dir.path()),
            Err(ReceiptError::DuplicateMerchant(_))
        ));
    }

    #[test]
    fn adjacent_slots_are_rejected() {
        let text = "merchant: x\nsender: *\ndate: {DATE}\norder: O{ORDER_ID}\nitem: {ITEM}{PRICE}\n";
        assert!(parse_template(Path::new("x.tmpl"), text).is_err());
    }

    proptest! {
        #[test]
        fn normalize_price_round_trips_canonical_rendering(cents in 0i64..100_000_000) {
            let rendered = format_price_cents(cents);
            prop_assert_eq!(normalize_price(&rendered).unwrap(), cents);
        }

        #[test]
        fn explode_length_is_sum_of_quantities(qts in proptest::collection::vec(1u32..5, 1..6)) {
            let lines: Vec<OrderLine> = qts
                .iter()
                .enumerate()
                .map(|(i, &q)| OrderLine {
                    item_name: format!("item-{i}"),
                    price_cents: 100 * (i as i64 + 1),
                    quantity: q,
                })
                .collect();
            let order = ParsedOrder {
                merchant_id: "m".into(),
                order_id: "o".into(),
                timestamp: 0,
                lines,
            };
            let total: u32 = qts.iter().sum();
            prop_assert_eq!(explode_order(&order, "u").len(), total as usize);
        }
    }
}
