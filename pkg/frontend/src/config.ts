// generated by scripts/genconfig.mjs; set API_BASE before "npm run build"
export const API_BASE = "http://127.0.0.1:8080";
