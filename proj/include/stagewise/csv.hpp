/*
 Copyright 2026 The Stagewise Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#pragma once

// Minimal CSV writer: header row, 17 significant digits, '\n' line ends.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace stagewise::csv
{

  inline std::string format(double v)
  {
    if (std::isnan(v))
      return "nan";
    if (std::isinf(v))
      return v > 0 ? "inf" : "-inf";
    std::ostringstream s;
    s.imbue(std::locale::classic());
    s << std::setprecision(17) << v;
    return s.str();
  }

  class Writer
  {
  public:
    Writer(const std::string &path, const std::vector<std::string> &header) : out_(path), columns_(header.size())
    {
      if (!out_)
        throw std::runtime_error("cannot open '" + path + "' for writing");
      write_fields(header);
    }

    /// Append one row; the width must match the header.
    void row(const std::vector<std::string> &fields)
    {
      if (fields.size() != columns_)
        throw std::logic_error("csv row has " + std::to_string(fields.size()) + " fields, header has " +
                               std::to_string(columns_));
      write_fields(fields);
    }

    void row(const std::vector<double> &values)
    {
      std::vector<std::string> fields;
      fields.reserve(values.size());
      for (double v : values)
        fields.push_back(format(v));
      row(fields);
    }

  private:
    void write_fields(const std::vector<std::string> &fields)
    {
      for (size_t i = 0; i < fields.size(); ++i)
        out_ << (i ? "," : "") << fields[i];
      out_ << '\n';
      if (!out_)
        throw std::runtime_error("csv write failed");
    }

    std::ofstream out_;
    size_t columns_;
  };

} // namespace stagewise::csv
