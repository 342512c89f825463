//! System prompts and user messages sent to the language/vision model.

use crate::raster::{IMAGE_HEIGHT, IMAGE_WIDTH};

pub const DECOMPOSE_SYSTEM: &str = "\
You help edit 3D shapes. A user describes how a shape should change. Split the \
request into the smallest ordered list of independent edits, each naming one \
part of the shape and what happens to it. Keep the user's wording where you \
can. A request that already names a single edit stays as one item.

Reply with one JSON object and nothing else:
{\"sub_instructions\": [\"<edit 1>\", \"<edit 2>\"]}

Request: make the dog's ears bigger and its tail shorter
Reply: {\"sub_instructions\": [\"enlarge ears\", \"shorten tail\"]}

Request: Flatten the roof
Reply: {\"sub_instructions\": [\"Flatten the roof\"]}";

pub const IDENTIFY_SYSTEM: &str = "\
You look at a 3D shape rendered from six axis-aligned cameras and decide which \
part an edit refers to. The images are named Camera.png (+X), Camera001.png \
(-X), Camera002.png (+Y), Camera003.png (-Y), Camera004.png (+Z) and \
Camera005.png (-Z), in the order given. Name the part with a short noun that \
an open-vocabulary detector would recognize, then list every image in which \
that part is clearly visible and not hidden behind the rest of the shape.

Reply with one JSON object and nothing else:
{\"reasoning\": \"<short explanation>\", \"part\": \"<noun>\", \"images\": [\"Camera.png\", ...]}";

pub fn select_handles_system() -> String {
    format!(
        "\
You move control points to edit a 3D shape seen in one rendered image. The \
image is {IMAGE_WIDTH} by {IMAGE_HEIGHT} pixels; x grows to the right, y grows \
downward, and (0, 0) is the top-left corner. Yellow dots mark the control \
points you may use and their pixel coordinates are also listed in the text.

Decide which way the part has to move on screen, pick the control point or \
points that best carry that motion, and give a new pixel position for each \
one. Copy the chosen points exactly from the list. Keep every coordinate \
inside the image. The direction must agree with the motion: Up lowers y, Down \
raises y, Left lowers x, Right raises x.

Reply with one JSON object and nothing else, always explaining first:
{{\"Reasoning\": \"<explanation>\", \"Direction\": \"Up|Down|Left|Right\", \
\"Handle\": [[x, y], ...], \"New Position\": [[x, y], ...]}}"
    )
}

pub fn decompose_user(text: &str) -> String {
    format!("Request: {text}")
}

pub fn identify_user(sub_instruction: &str) -> String {
    format!("Edit: {sub_instruction}\nThe six images follow in order.")
}

pub fn select_handles_user(sub_instruction: &str, points: &[[f64; 2]]) -> String {
    let list: Vec<String> = points.iter().map(|p| format!("[{}, {}]", p[0].round(), p[1].round())).collect();
    format!("Edit: {sub_instruction}\nControl points (x, y): [{}]\nWhich points move, in which direction, and to where?", list.join(", "))
}

/// Recovers the point list written by [`select_handles_user`].
pub fn listed_points(user: &str) -> Option<Vec<[f64; 2]>> {
    let line = user.lines().find_map(|l| l.strip_prefix("Control points (x, y): "))?;
    serde_json::from_str(line).ok()
}

/// Extra line appended when a reply is re-requested.
pub fn retry_note(problem: &str) -> String {
    format!("\nYour previous reply could not be used: {problem}. Answer again in the required JSON format.")
}
