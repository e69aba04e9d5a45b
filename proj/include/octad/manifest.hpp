#pragma once

#include <optional>
#include <string>
#include <vector>

#include "octad/error.hpp"

namespace octad {

enum class Eye : uint8_t { L, R };
enum class Sex : uint8_t { F, M };
enum class Label : uint8_t { CN = 0, AD = 1 };

const char* to_string(Eye e);
const char* to_string(Sex s);
const char* to_string(Label l);

// One scan of one eye of one subject, with the clinical metadata that drives
// cohort curation. years_to_diagnosis is present exactly for AD rows.
struct SubjectRecord {
  std::string subject_id;
  Eye eye = Eye::L;
  int age = 0;
  Sex sex = Sex::F;
  int instance = 0;  // assessment-visit index, 0 or 1
  std::optional<double> years_to_diagnosis;
  Label label = Label::CN;
  std::string image_path;

  bool operator==(const SubjectRecord&) const = default;
};

struct Manifest {
  std::vector<SubjectRecord> rows;

  bool operator==(const Manifest&) const = default;

  // Comma-separated text with the fixed header
  //   subject_id,eye,age,sex,instance,years_to_diagnosis,label,image_path
  // Empty years field for controls. Validates field syntax, the
  // (subject_id, eye, instance) uniqueness invariant, label/years
  // consistency, and age in 18..110.
  static Manifest parse(const std::string& text);
  std::string serialize() const;

  static Manifest load(const std::string& path);
  void save(const std::string& path) const;
};

}  // namespace octad
