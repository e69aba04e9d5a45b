#include "octad/manifest.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace octad {

namespace {

constexpr const char* kHeader =
    "subject_id,eye,age,sex,instance,years_to_diagnosis,label,image_path";

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

int parse_int(const std::string& s, const char* what) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw Error(Errc::bad_field, std::string(what) + " not an integer: '" + s + "'");
  return v;
}

double parse_double(const std::string& s, const char* what) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw Error(Errc::bad_field, std::string(what) + " not a number: '" + s + "'");
  return v;
}

std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace

const char* to_string(Eye e) { return e == Eye::L ? "L" : "R"; }
const char* to_string(Sex s) { return s == Sex::F ? "F" : "M"; }
const char* to_string(Label l) { return l == Label::AD ? "AD" : "CN"; }

Manifest Manifest::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::missing_column, "empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader)
    throw Error(Errc::missing_column, "header must be exactly '" + std::string(kHeader) + "'");

  Manifest m;
  std::set<std::tuple<std::string, uint8_t, int>> seen;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 8)
      throw Error(Errc::missing_column,
                  "line " + std::to_string(lineno) + ": expected 8 fields, got " +
                      std::to_string(f.size()));

    SubjectRecord r;
    r.subject_id = f[0];
    if (r.subject_id.empty()) throw Error(Errc::bad_field, "empty subject_id");
    if (f[1] == "L") r.eye = Eye::L;
    else if (f[1] == "R") r.eye = Eye::R;
    else throw Error(Errc::bad_field, "eye must be L or R: '" + f[1] + "'");
    r.age = parse_int(f[2], "age");
    if (r.age < 18 || r.age > 110)
      throw Error(Errc::bad_field, "age out of 18..110: " + f[2]);
    if (f[3] == "F") r.sex = Sex::F;
    else if (f[3] == "M") r.sex = Sex::M;
    else throw Error(Errc::bad_field, "sex must be F or M: '" + f[3] + "'");
    r.instance = parse_int(f[4], "instance");
    if (r.instance != 0 && r.instance != 1)
      throw Error(Errc::bad_field, "instance must be 0 or 1: " + f[4]);
    if (!f[5].empty()) {
      double y = parse_double(f[5], "years_to_diagnosis");
      if (y < 0) throw Error(Errc::bad_field, "negative years_to_diagnosis");
      r.years_to_diagnosis = y;
    }
    if (f[6] == "AD") r.label = Label::AD;
    else if (f[6] == "CN") r.label = Label::CN;
    else throw Error(Errc::bad_field, "label must be AD or CN: '" + f[6] + "'");
    if ((r.label == Label::AD) != r.years_to_diagnosis.has_value())
      throw Error(Errc::label_years_inconsistent,
                  "line " + std::to_string(lineno) + ": label=" + f[6] +
                      " with years_to_diagnosis='" + f[5] + "'");
    r.image_path = f[7];

    auto key = std::make_tuple(r.subject_id, static_cast<uint8_t>(r.eye), r.instance);
    if (!seen.insert(key).second)
      throw Error(Errc::duplicate_key,
                  "duplicate (subject_id, eye, instance): " + r.subject_id + "," + f[1] + "," + f[4]);
    m.rows.push_back(std::move(r));
  }
  return m;
}

std::string Manifest::serialize() const {
  std::ostringstream out;
  out << kHeader << '\n';
  for (const SubjectRecord& r : rows) {
    out << r.subject_id << ',' << to_string(r.eye) << ',' << r.age << ',' << to_string(r.sex)
        << ',' << r.instance << ',';
    if (r.years_to_diagnosis) out << format_double(*r.years_to_diagnosis);
    out << ',' << to_string(r.label) << ',' << r.image_path << '\n';
  }
  return out.str();
}

Manifest Manifest::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::io_failure, "cannot open manifest: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

void Manifest::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(Errc::io_failure, "cannot write manifest: " + path);
  f << serialize();
}

}  // namespace octad
