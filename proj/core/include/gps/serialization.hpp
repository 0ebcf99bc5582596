#pragma once

#include <string>

#include "gps/estimators.hpp"
#include "gps/selective.hpp"
#include "gps/simulation.hpp"
#include "gps/variance.hpp"

namespace gps {

// JSON encodings. Group labels are written 1-based; unbounded interval
// ends are written as null.
std::string fit_to_json(const GroupFit& fit);
GroupFit fit_from_json(const std::string& text);

std::string test_result_to_json(const TestResult& result);
TestResult test_result_from_json(const std::string& text);

std::string covariances_to_json(const GroupCovariances& cov);

// {"R": [[...], ...], "r": [...]}. K is inferred from the column count.
LinearHypothesis hypothesis_from_json(const std::string& text, int groups);
std::string hypothesis_to_json(const LinearHypothesis& h);

std::string sim_config_to_json(const SimConfig& cfg);
StudySpec study_from_json(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace gps
