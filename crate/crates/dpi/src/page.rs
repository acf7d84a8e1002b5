use spotex_core::PageMode;

use crate::session::SessionId;

pub const SHIM_PATH: &str = "/shim.js";

/// Wraps rendered content in a complete HTML document. Annotated pages load
/// the browser shim, which re-evaluates `cond` blocks client side.
pub fn document(content: &str, mode: PageMode, session: Option<&SessionId>) -> String {
    let mut doc = String::from(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>SpotEx</title>\n</head>\n<body>\n<main id=\"spotex-content\">\n",
    );
    if !content.is_empty() {
        doc.push_str(content);
        doc.push('\n');
    }
    doc.push_str("</main>\n");
    if mode == PageMode::Annotated {
        // session tokens are URL-safe, so they need no attribute escaping
        match session {
            Some(id) => doc.push_str(&format!(
                "<script src=\"{SHIM_PATH}\" data-session=\"{id}\"></script>\n"
            )),
            None => doc.push_str(&format!("<script src=\"{SHIM_PATH}\"></script>\n")),
        }
    }
    doc.push_str("</body>\n</html>\n");
    doc
}
