import json


schema_rejection = json.loads('''{
  "error": {
    "message": "Malformed envelope"
  }
}''')

privacy_rejection = json.loads('''{
  "error": {
    "message": "Payload carries individual-level fields: X, y",
    "site_id": "site3",
    "fields": ["X", "y"]
  }
}''')

round_rejection = json.loads('''{
  "error": {
    "message": "site_estimate belongs to round 2, not 1",
    "site_id": "site2"
  }
}''')

unknown_kind_rejection = json.loads('''{
  "error": {
    "message": "Unknown payload kind 'raw_rows'",
    "site_id": "site2"
  }
}''')

not_an_error = json.loads('''{
  "delivered": ["site2"]
}''')
